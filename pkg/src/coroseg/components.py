"""Connected components and the two mask clean-up filters.

The clean-up pipeline drops connected voxel groups smaller than a volume
threshold and groups lying entirely outside a reference region (e.g. a
pericardium mask), leaving every surviving voxel untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InputError
from .volume import Kind, Volume


@dataclass(frozen=True)
class ComponentStats:
    voxel_count: int
    volume_mm3: float
    bbox: tuple[int, int, int, int, int, int]  # (x0, x1, y0, y1, z0, z1) inclusive


@dataclass(frozen=True)
class ComponentTable:
    labels: Volume
    count: int
    stats: tuple[ComponentStats, ...]  # index c-1 describes label c


def _require_binary(mask: Volume) -> np.ndarray:
    if mask.kind is not Kind.LABEL:
        raise InputError("expected a label volume")
    data = mask.data
    if data.size and int(data.max(initial=0)) > 1:
        raise InputError("mask must be binary (0/1)")
    return data


def label_components(mask: Volume, connectivity: int = 26) -> ComponentTable:
    """Label 0/1 mask into components 1..count, scan-order numbering."""
    data = _require_binary(mask)
    if connectivity not in (6, 26):
        raise InputError(f"connectivity must be 6 or 26, got {connectivity}")
    labels, count = _kernels.label_components(data, connectivity)
    vox_mm3 = mask.voxel_volume_mm3
    stats = []
    if count:
        idx = np.argwhere(labels > 0)
        lab_at = labels[idx[:, 0], idx[:, 1], idx[:, 2]]
        for c in range(1, count + 1):
            pts = idx[lab_at == c]
            n = int(pts.shape[0])
            lo = pts.min(axis=0)
            hi = pts.max(axis=0)
            stats.append(
                ComponentStats(
                    voxel_count=n,
                    volume_mm3=n * vox_mm3,
                    bbox=(int(lo[0]), int(hi[0]), int(lo[1]), int(hi[1]), int(lo[2]), int(hi[2])),
                )
            )
    return ComponentTable(
        labels=mask.with_data(labels), count=count, stats=tuple(stats)
    )


def filter_small(mask: Volume, min_volume_mm3: float, connectivity: int = 26) -> Volume:
    """Remove components with physical volume strictly below the threshold."""
    if min_volume_mm3 < 0:
        raise InputError(f"min_volume_mm3 must be >= 0, got {min_volume_mm3}")
    table = label_components(mask, connectivity)
    if table.count == 0:
        return mask
    keep = np.array(
        [False] + [s.volume_mm3 >= min_volume_mm3 for s in table.stats], dtype=bool
    )
    out = np.where(keep[table.labels.data], mask.data, 0).astype(mask.data.dtype)
    return mask.with_data(out)


def filter_outside(mask: Volume, region: Volume, connectivity: int = 26) -> Volume:
    """Remove components with no voxel inside ``region``.

    A single shared voxel keeps the whole component; only groups entirely
    outside the region are dropped.
    """
    mask.require_same_grid(region)
    _require_binary(region)
    table = label_components(mask, connectivity)
    if table.count == 0:
        return mask
    inside = region.data != 0
    keep = np.zeros(table.count + 1, dtype=bool)
    touched = np.unique(table.labels.data[inside])
    keep[touched[touched > 0]] = True
    out = np.where(keep[table.labels.data], mask.data, 0).astype(mask.data.dtype)
    return mask.with_data(out)


def postprocess(
    mask: Volume,
    pericardium: Volume | None = None,
    min_volume_mm3: float = 50.0,
    connectivity: int = 26,
) -> Volume:
    """Volume filter then (optionally) region filter, as one call."""
    out = filter_small(mask, min_volume_mm3, connectivity)
    if pericardium is not None:
        out = filter_outside(out, pericardium, connectivity)
    return out
