"""Overlap and centerline-overlap metrics between binary masks.

All six metrics return NaN (the undefined marker) when their denominator is
empty; aggregation excludes NaN entries per metric. Centerline metrics run
the thinning from :mod:`coroseg.skeleton` on each mask and test skeleton
voxel membership in the opposite mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .components import postprocess as _postprocess
from .errors import InputError
from .skeleton import skeletonize
from .volume import Kind, Volume

UNDEFINED = float("nan")


def is_defined(x: float) -> bool:
    return not math.isnan(x)


@dataclass(frozen=True)
class MetricSextet:
    dice: float
    recall: float
    precision: float
    cl_dice: float
    cl_recall: float
    cl_precision: float

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


METRIC_NAMES = [f.name for f in fields(MetricSextet)]


def _check_pair(pred: Volume, gt: Volume) -> None:
    for v in (pred, gt):
        if v.kind is not Kind.LABEL:
            raise InputError("metrics expect label volumes")
        if v.data.size and int(v.data.max(initial=0)) > 1:
            raise InputError("masks must be binary (0/1)")
    pred.require_same_grid(gt)


def _ratio(num: int, den: int) -> float:
    return num / den if den else UNDEFINED


def overlap_metrics(pred: Volume, gt: Volume) -> tuple[float, float, float]:
    """(dice, recall, precision) from voxel overlap."""
    _check_pair(pred, gt)
    p = pred.data != 0
    g = gt.data != 0
    inter = int(np.count_nonzero(p & g))
    np_, ng = int(np.count_nonzero(p)), int(np.count_nonzero(g))
    dice = _ratio(2 * inter, np_ + ng)
    recall = _ratio(inter, ng)
    precision = _ratio(inter, np_)
    return dice, recall, precision


def centerline_metrics(
    pred: Volume, gt: Volume, skeletons: tuple[Volume, Volume] | None = None
) -> tuple[float, float, float]:
    """(cl_dice, cl_recall, cl_precision) from skeleton overlap.

    Precomputed skeletons may be passed (in pred, gt order) to avoid
    re-thinning the same masks.
    """
    _check_pair(pred, gt)
    if skeletons is None:
        skel_p = skeletonize(pred)
        skel_g = skeletonize(gt)
    else:
        skel_p, skel_g = skeletons
    sp = skel_p.data != 0
    sg = skel_g.data != 0
    n_sp = int(np.count_nonzero(sp))
    n_sg = int(np.count_nonzero(sg))
    if n_sp == 0 or n_sg == 0:
        # an empty skeleton on either side makes the comparison meaningless
        return UNDEFINED, UNDEFINED, UNDEFINED
    cl_precision = int(np.count_nonzero(sp & (gt.data != 0))) / n_sp
    cl_recall = int(np.count_nonzero(sg & (pred.data != 0))) / n_sg
    if cl_precision + cl_recall > 0:
        cl_dice = 2 * cl_precision * cl_recall / (cl_precision + cl_recall)
    else:
        cl_dice = UNDEFINED
    return cl_dice, cl_recall, cl_precision


VARIANT_NONE = "none"
VARIANT_VOL50 = "vol50"
VARIANT_PERICARDIUM = "pericardium"
VARIANT_BOTH = "vol50+pericardium"


def variant_name(vol50: bool, pericardium: bool) -> str:
    if vol50 and pericardium:
        return VARIANT_BOTH
    if vol50:
        return VARIANT_VOL50
    if pericardium:
        return VARIANT_PERICARDIUM
    return VARIANT_NONE


def evaluate_case(
    pred: Volume,
    gt: Volume,
    pericardium: Volume | None = None,
    vol50: bool = False,
    use_pericardium: bool = False,
    min_volume_mm3: float = 50.0,
) -> MetricSextet:
    """Apply the selected mask filters to the prediction, then score it."""
    if use_pericardium and pericardium is None:
        raise InputError("pericardium filter requested but no pericardium volume given")
    cleaned = pred
    if vol50 or use_pericardium:
        cleaned = _postprocess(
            pred,
            pericardium=pericardium if use_pericardium else None,
            min_volume_mm3=min_volume_mm3 if vol50 else 0.0,
        )
    dice, recall, precision = overlap_metrics(cleaned, gt)
    cl_dice, cl_recall, cl_precision = centerline_metrics(cleaned, gt)
    return MetricSextet(dice, recall, precision, cl_dice, cl_recall, cl_precision)


@dataclass(frozen=True)
class SummaryStat:
    mean: float
    median: float
    std: float


def summarize(cohort: list[MetricSextet]) -> dict[str, SummaryStat]:
    """Per-metric sample statistics, NaN entries excluded per metric."""
    if not cohort:
        raise InputError("empty cohort")
    out: dict[str, SummaryStat] = {}
    for name in METRIC_NAMES:
        vals = np.array([getattr(m, name) for m in cohort], dtype=np.float64)
        defined = vals[~np.isnan(vals)]
        if defined.size == 0:
            out[name] = SummaryStat(UNDEFINED, UNDEFINED, UNDEFINED)
            continue
        mean = float(defined.mean())
        median = float(np.median(defined))
        std = float(defined.std(ddof=1)) if defined.size > 1 else UNDEFINED
        out[name] = SummaryStat(mean, median, std)
    return out


def _json_num(x: float, ndigits: int | None = None):
    if not is_defined(x):
        return None
    return round(x, ndigits) if ndigits is not None else x


def build_report(
    variant: str, per_case: list[MetricSextet], case_ids: list[str] | None = None
) -> dict:
    """JSON-ready cohort report: per-case sextets plus 2-decimal summary."""
    summary = summarize(per_case)
    cases = []
    for i, m in enumerate(per_case):
        entry = {k: _json_num(v) for k, v in m.as_dict().items()}
        if case_ids is not None:
            entry["case"] = case_ids[i]
        cases.append(entry)
    return {
        "variant": variant,
        "per_case": cases,
        "summary": {
            name: {
                "mean": _json_num(s.mean, 2),
                "median": _json_num(s.median, 2),
                "std": _json_num(s.std, 2),
            }
            for name, s in summary.items()
        },
    }
