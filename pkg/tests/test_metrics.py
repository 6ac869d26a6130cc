"""Metric formulas vs set-enumeration oracles, NaN conventions, summaries."""

import math

import numpy as np
import pytest

from coroseg import GridMismatchError, InputError
from coroseg.metrics import (
    MetricSextet,
    build_report,
    centerline_metrics,
    evaluate_case,
    is_defined,
    overlap_metrics,
    summarize,
)
from coroseg.skeleton import skeletonize

from helpers import make_label, tube_mask


def _sets_oracle(pred, gt):
    """dice/recall/precision from explicit coordinate sets."""
    P = {tuple(v) for v in np.argwhere(pred != 0)}
    G = {tuple(v) for v in np.argwhere(gt != 0)}
    inter = len(P & G)
    dice = 2 * inter / (len(P) + len(G)) if P or G else float("nan")
    recall = inter / len(G) if G else float("nan")
    precision = inter / len(P) if P else float("nan")
    return dice, recall, precision


class TestOverlap:
    def test_identical(self):
        d = np.zeros((6, 6, 6), dtype=np.uint8)
        d[2:4, 2:4, 2:4] = 1
        v = make_label(d)
        assert overlap_metrics(v, v) == (1.0, 1.0, 1.0)

    def test_disjoint(self):
        a = np.zeros((6, 6, 6), dtype=np.uint8)
        b = np.zeros((6, 6, 6), dtype=np.uint8)
        a[0, 0, 0] = 1
        b[5, 5, 5] = 1
        assert overlap_metrics(make_label(a), make_label(b)) == (0.0, 0.0, 0.0)

    def test_shifted_cube(self):
        p = np.zeros((4, 4, 4), dtype=np.uint8)
        g = np.zeros((4, 4, 4), dtype=np.uint8)
        p[0:2, 0:2, 0:2] = 1
        g[1:3, 0:2, 0:2] = 1
        dice, recall, precision = overlap_metrics(make_label(p), make_label(g))
        assert dice == 0.5
        assert recall == 0.5
        assert precision == 0.5

    def test_empty_denominators_nan(self):
        e = make_label(np.zeros((4, 4, 4), dtype=np.uint8))
        d = np.zeros((4, 4, 4), dtype=np.uint8)
        d[1, 1, 1] = 1
        v = make_label(d)
        dice, recall, precision = overlap_metrics(v, e)
        assert math.isnan(recall) and not math.isnan(precision)
        dice2, recall2, precision2 = overlap_metrics(e, e)
        assert all(math.isnan(x) for x in (dice2, recall2, precision2))

    def test_matches_set_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            p = (rng.random((10, 10, 10)) < 0.3).astype(np.uint8)
            g = (rng.random((10, 10, 10)) < 0.3).astype(np.uint8)
            got = overlap_metrics(make_label(p), make_label(g))
            want = _sets_oracle(p, g)
            assert got == pytest.approx(want, nan_ok=True)

    def test_symmetries(self):
        rng = np.random.default_rng(22)
        p = (rng.random((8, 8, 8)) < 0.4).astype(np.uint8)
        g = (rng.random((8, 8, 8)) < 0.4).astype(np.uint8)
        vp, vg = make_label(p), make_label(g)
        d1, r1, pr1 = overlap_metrics(vp, vg)
        d2, r2, pr2 = overlap_metrics(vg, vp)
        assert d1 == d2
        assert pr1 == r2 and r1 == pr2

    def test_dice_is_harmonic_mean(self):
        rng = np.random.default_rng(23)
        p = (rng.random((8, 8, 8)) < 0.4).astype(np.uint8)
        g = (rng.random((8, 8, 8)) < 0.4).astype(np.uint8)
        dice, recall, precision = overlap_metrics(make_label(p), make_label(g))
        if precision + recall > 0:
            assert dice == pytest.approx(2 * precision * recall / (precision + recall))

    def test_grid_mismatch(self):
        a = make_label(np.zeros((4, 4, 4), dtype=np.uint8), spacing=(1, 1, 1))
        b = make_label(np.zeros((4, 4, 4), dtype=np.uint8), spacing=(2, 2, 2))
        with pytest.raises(GridMismatchError):
            overlap_metrics(a, b)


class TestCenterline:
    def test_identical_tube(self):
        m = tube_mask((20, 12, 12), (3, 6, 6), (17, 6, 6), 2.2)
        v = make_label(m)
        cl_dice, cl_recall, cl_precision = centerline_metrics(v, v)
        assert (cl_dice, cl_recall, cl_precision) == (1.0, 1.0, 1.0)

    def test_half_tube(self):
        g = tube_mask((30, 12, 12), (2, 6, 6), (27, 6, 6), 2.2)
        p = g.copy()
        p[15:, :, :] = 0  # keep front half along the axis
        cl_dice, cl_recall, cl_precision = centerline_metrics(make_label(p), make_label(g))
        assert cl_precision == 1.0
        assert cl_recall == pytest.approx(0.5, abs=0.12)
        assert cl_dice == pytest.approx(2 * cl_precision * cl_recall / (cl_precision + cl_recall))

    def test_empty_gt_undefined(self):
        d = np.zeros((6, 6, 6), dtype=np.uint8)
        d[2:4, 2:4, 2:4] = 1
        got = centerline_metrics(make_label(d), make_label(np.zeros_like(d)))
        assert all(math.isnan(x) for x in got)

    def test_matches_membership_oracle(self):
        rng = np.random.default_rng(31)
        g = tube_mask((24, 14, 14), (3, 7, 7), (21, 7, 7), 2.5)
        p = (g & (rng.random(g.shape) < 0.9)).astype(np.uint8)
        vp, vg = make_label(p), make_label(g)
        skel_p, skel_g = skeletonize(vp), skeletonize(vg)
        cl_dice, cl_recall, cl_precision = centerline_metrics(vp, vg)
        SP = {tuple(v) for v in np.argwhere(skel_p.data != 0)}
        SG = {tuple(v) for v in np.argwhere(skel_g.data != 0)}
        G = {tuple(v) for v in np.argwhere(g != 0)}
        P = {tuple(v) for v in np.argwhere(p != 0)}
        want_prec = len(SP & G) / len(SP)
        want_rec = len(SG & P) / len(SG)
        assert cl_precision == want_prec
        assert cl_recall == want_rec
        if want_prec + want_rec > 0:
            assert cl_dice == 2 * want_prec * want_rec / (want_prec + want_rec)


class TestEvaluateCase:
    def _phantom(self):
        # trunk ~1300 voxels = ~56 mm3 at 0.35 mm: survives the volume filter
        gt = tube_mask((40, 20, 20), (3, 10, 10), (37, 10, 10), 3.5)
        pred = gt.copy()
        pred[2:6, 2:5, 2:5] = 1  # small satellite component disjoint from gt
        spacing = (0.35, 0.35, 0.35)
        return make_label(pred, spacing=spacing), make_label(gt, spacing=spacing)

    def test_no_flags_equals_direct_calls(self):
        pred, gt = self._phantom()
        m = evaluate_case(pred, gt)
        dice, recall, precision = overlap_metrics(pred, gt)
        assert (m.dice, m.recall, m.precision) == (dice, recall, precision)

    def test_vol50_improves_precision_keeps_recall(self):
        pred, gt = self._phantom()
        base = evaluate_case(pred, gt)
        filtered = evaluate_case(pred, gt, vol50=True)
        assert filtered.precision > base.precision
        assert filtered.recall == base.recall

    def test_pericardium_removes_outside_blob(self):
        pred, gt = self._phantom()
        peri = np.zeros(pred.dims, dtype=np.uint8)
        peri[:, 6:, 6:] = 1  # excludes the satellite corner
        peri_v = make_label(peri, spacing=(0.35, 0.35, 0.35))
        base = evaluate_case(pred, gt)
        filtered = evaluate_case(pred, gt, pericardium=peri_v, use_pericardium=True)
        assert filtered.precision > base.precision
        assert filtered.recall == base.recall

    def test_pericardium_flag_requires_volume(self):
        pred, gt = self._phantom()
        with pytest.raises(InputError):
            evaluate_case(pred, gt, use_pericardium=True)


class TestSummarize:
    def _sextets(self, values):
        return [MetricSextet(v, v, v, v, v, v) for v in values]

    def test_hand_example(self):
        s = summarize(self._sextets([0.6, 0.7, 0.8]))["dice"]
        assert s.mean == pytest.approx(0.7)
        assert s.median == pytest.approx(0.7)
        assert s.std == pytest.approx(0.1)

    def test_even_median_is_midpoint(self):
        s = summarize(self._sextets([0.2, 0.4, 0.6, 1.0]))["dice"]
        assert s.median == pytest.approx(0.5)

    def test_singleton_std_undefined(self):
        s = summarize(self._sextets([0.5]))["dice"]
        assert s.mean == 0.5 and s.median == 0.5
        assert not is_defined(s.std)

    def test_identical_values_zero_std(self):
        s = summarize(self._sextets([0.3, 0.3, 0.3]))["dice"]
        assert s.std == 0.0

    def test_nan_excluded_per_metric(self):
        rows = self._sextets([0.4, 0.8]) + [MetricSextet(*([float("nan")] * 6))]
        s = summarize(rows)["dice"]
        assert s.mean == pytest.approx(0.6)

    def test_empty_cohort_rejected(self):
        with pytest.raises(InputError):
            summarize([])

    def test_report_nan_to_null_and_rounding(self):
        rows = [MetricSextet(0.654, 1.0, 0.5, float("nan"), 0.25, 0.75)]
        rep = build_report("vol50", rows, case_ids=["c0"])
        assert rep["variant"] == "vol50"
        assert rep["per_case"][0]["cl_dice"] is None
        assert rep["per_case"][0]["case"] == "c0"
        assert rep["summary"]["dice"]["mean"] == 0.65
        assert rep["summary"]["dice"]["std"] is None
