"""3D scalar volumes: parse, write, window, resample.

A :class:`Volume` couples a (nx, ny, nz) array with its physical placement
(spacing in mm/voxel, origin in mm, orthonormal direction matrix). Voxel
(i, j, k) sits at ``origin + direction @ (spacing * (i, j, k))``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nifti
from .errors import GridMismatchError, InputError

_ORTHO_TOL = 1e-6


class Kind(enum.Enum):
    INTENSITY = "intensity"
    LABEL = "label"


@dataclass(frozen=True)
class Volume:
    """Immutable 3D grid with physical metadata.

    ``data`` is made read-only at construction so instances can be shared
    across threads.
    """

    data: np.ndarray
    spacing: np.ndarray
    origin: np.ndarray
    direction: np.ndarray
    kind: Kind = Kind.INTENSITY

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise InputError(f"volume data must be 3D, got shape {data.shape}")
        spacing = np.asarray(self.spacing, dtype=np.float64).reshape(3)
        origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        direction = np.asarray(self.direction, dtype=np.float64).reshape(3, 3)
        if not np.all(spacing > 0):
            raise InputError(f"spacing must be strictly positive, got {spacing}")
        if not np.allclose(direction.T @ direction, np.eye(3), atol=_ORTHO_TOL):
            raise InputError("direction matrix is not orthonormal within 1e-6")
        if self.kind is Kind.LABEL:
            if not np.issubdtype(data.dtype, np.integer):
                raise InputError(f"label volume must have integer dtype, got {data.dtype}")
            if data.size and data.min() < 0:
                raise InputError("label volume contains negative values")
        for arr in (data, spacing, origin, direction):
            arr.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "direction", direction)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def voxel_volume_mm3(self) -> float:
        return float(self.spacing[0] * self.spacing[1] * self.spacing[2])

    def same_grid(self, other: "Volume", tol: float = 1e-6) -> bool:
        return (
            self.dims == other.dims
            and bool(np.all(np.abs(self.spacing - other.spacing) <= tol))
            and bool(np.all(np.abs(self.origin - other.origin) <= tol))
            and bool(np.all(np.abs(self.direction - other.direction) <= tol))
        )

    def require_same_grid(self, other: "Volume") -> None:
        if not self.same_grid(other):
            raise GridMismatchError("volumes are not on the same grid")

    def with_data(self, data: np.ndarray, kind: Kind | None = None) -> "Volume":
        """New volume on this grid with different payload."""
        return Volume(data, self.spacing, self.origin, self.direction, kind or self.kind)

    def index_to_mm(self, idx: np.ndarray) -> np.ndarray:
        """Map (possibly fractional) voxel indices (..., 3) to mm points."""
        idx = np.asarray(idx, dtype=np.float64)
        return (idx * self.spacing) @ self.direction.T + self.origin

    def mm_to_index(self, pts: np.ndarray) -> np.ndarray:
        """Map mm points (..., 3) to continuous voxel indices."""
        pts = np.asarray(pts, dtype=np.float64)
        return ((pts - self.origin) @ self.direction) / self.spacing


@dataclass(frozen=True)
class WindowSpec:
    """HU display window; maps [low, high] onto [0, 255]."""

    low: float
    high: float

    def __post_init__(self):
        if not self.low < self.high:
            raise InputError(f"window low must be < high, got ({self.low}, {self.high})")


def read_volume(path: str | Path, label: bool | None = None) -> Volume:
    """Read a NIfTI-1 volume (.nii or .nii.gz).

    ``label`` forces the kind; when None, uint8 payloads are treated as
    label masks and everything else as intensity. Scale slope/intercept is
    applied to intensity data only.
    """
    hdr, data = nifti.read(path)
    aff = nifti.affine_from_header(hdr)
    M = aff[:3, :3]
    spacing = np.sqrt((M * M).sum(axis=0))
    spacing[spacing == 0] = 1.0
    direction = M / spacing[np.newaxis, :]
    origin = aff[:3, 3]

    if label is None:
        label = data.dtype == np.uint8
    kind = Kind.LABEL if label else Kind.INTENSITY
    if kind is Kind.LABEL and not np.issubdtype(data.dtype, np.integer):
        raise InputError(f"label volume requested but payload dtype is {data.dtype}")

    if kind is Kind.INTENSITY:
        slope = float(hdr["scl_slope"])
        inter = float(hdr["scl_inter"])
        if slope not in (0.0, 1.0) or inter != 0.0:
            data = (data.astype(np.float32) * (slope or 1.0) + inter).astype(np.float32)
    return Volume(data, spacing, origin, direction, kind)


def write_volume(v: Volume, path: str | Path) -> None:
    """Write as single-file NIfTI-1; payload is stored bit-identically.

    Header geometry fields are float32, so spacing/origin round-trip
    exactly only when float32-representable.
    """
    hdr = nifti.build_header(v.dims, v.spacing, v.origin, v.direction, v.data.dtype)
    nifti.write(path, hdr, v.data)


class ResampleMode(enum.Enum):
    TRILINEAR = "trilinear"
    NEAREST = "nearest"


def resample(v: Volume, target_spacing, mode: ResampleMode | str = ResampleMode.TRILINEAR) -> Volume:
    """Resample onto a new spacing, voxel centers anchored at the origin.

    Output dims are ceil(dims * spacing / target); samples beyond the last
    input voxel center clamp to the edge value, so physical extent is
    preserved within one output voxel.
    """
    mode = ResampleMode(mode)
    target = np.asarray(target_spacing, dtype=np.float64).reshape(3)
    if not np.all(target > 0):
        raise InputError(f"target spacing must be positive, got {target}")
    if v.kind is Kind.LABEL and mode is not ResampleMode.NEAREST:
        raise InputError("label volumes must be resampled with nearest mode")

    # 8-ulp slack so an exact-ratio ceil does not overshoot from float rounding
    ratio = np.array(v.dims) * v.spacing / target
    out_dims = tuple(int(np.ceil(r * (1 - 8 * np.finfo(float).eps))) for r in ratio)

    scale = target / v.spacing
    axes = [np.arange(n, dtype=np.float64) * scale[i] for i, n in enumerate(out_dims)]
    if mode is ResampleMode.NEAREST:
        # round half up, matching the windowing convention
        idx = [np.clip(np.floor(ax + 0.5).astype(np.intp), 0, v.dims[i] - 1) for i, ax in enumerate(axes)]
        data = v.data[np.ix_(idx[0], idx[1], idx[2])]
    else:
        data = _trilinear_grid(v.data, axes).astype(
            v.data.dtype if np.issubdtype(v.data.dtype, np.floating) else np.float32
        )
    return Volume(data, target, v.origin, v.direction, v.kind)


def _trilinear_grid(data: np.ndarray, axes: list[np.ndarray]) -> np.ndarray:
    """Separable trilinear interpolation on a rectilinear target grid."""
    coords = []
    for i, ax in enumerate(axes):
        ax = np.clip(ax, 0.0, data.shape[i] - 1.0)
        lo = np.floor(ax).astype(np.intp)
        lo = np.minimum(lo, max(data.shape[i] - 2, 0))
        frac = ax - lo
        coords.append((lo, frac))
    (x0, fx), (y0, fy), (z0, fz) = coords
    x1 = np.minimum(x0 + 1, data.shape[0] - 1)
    y1 = np.minimum(y0 + 1, data.shape[1] - 1)
    z1 = np.minimum(z0 + 1, data.shape[2] - 1)
    d = data.astype(np.float64)
    fx = fx[:, None, None]
    fy = fy[None, :, None]
    fz = fz[None, None, :]
    c00 = d[np.ix_(x0, y0, z0)] * (1 - fx) + d[np.ix_(x1, y0, z0)] * fx
    c10 = d[np.ix_(x0, y1, z0)] * (1 - fx) + d[np.ix_(x1, y1, z0)] * fx
    c01 = d[np.ix_(x0, y0, z1)] * (1 - fx) + d[np.ix_(x1, y0, z1)] * fx
    c11 = d[np.ix_(x0, y1, z1)] * (1 - fx) + d[np.ix_(x1, y1, z1)] * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    return c0 * (1 - fz) + c1 * fz


def sample_trilinear(v: Volume, points_mm: np.ndarray, outside: float = -1024.0) -> np.ndarray:
    """Trilinear samples at arbitrary mm points; outside the grid -> sentinel."""
    idx = v.mm_to_index(points_mm)
    flat = idx.reshape(-1, 3)
    nx, ny, nz = v.dims
    inside = (
        (flat[:, 0] >= 0) & (flat[:, 0] <= nx - 1)
        & (flat[:, 1] >= 0) & (flat[:, 1] <= ny - 1)
        & (flat[:, 2] >= 0) & (flat[:, 2] <= nz - 1)
    )
    out = np.full(flat.shape[0], float(outside))
    if inside.any():
        p = flat[inside]
        lo = np.floor(p).astype(np.intp)
        lo = np.minimum(lo, np.array([nx, ny, nz]) - 2)
        lo = np.maximum(lo, 0)
        f = p - lo
        d = v.data.astype(np.float64)
        x0, y0, z0 = lo[:, 0], lo[:, 1], lo[:, 2]
        x1, y1, z1 = x0 + 1, y0 + 1, z0 + 1
        fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
        val = (
            d[x0, y0, z0] * (1 - fx) * (1 - fy) * (1 - fz)
            + d[x1, y0, z0] * fx * (1 - fy) * (1 - fz)
            + d[x0, y1, z0] * (1 - fx) * fy * (1 - fz)
            + d[x0, y0, z1] * (1 - fx) * (1 - fy) * fz
            + d[x1, y1, z0] * fx * fy * (1 - fz)
            + d[x1, y0, z1] * fx * (1 - fy) * fz
            + d[x0, y1, z1] * (1 - fx) * fy * fz
            + d[x1, y1, z1] * fx * fy * fz
        )
        out[inside] = val
    return out.reshape(idx.shape[:-1])


def window_to_gray(v: Volume | np.ndarray, w: WindowSpec) -> np.ndarray:
    """Linear [low, high] -> [0, 255] byte map, round half up, clamped."""
    if isinstance(v, Volume):
        if v.kind is not Kind.INTENSITY:
            raise InputError("windowing applies to intensity volumes only")
        data = v.data
    else:
        data = np.asarray(v)
    scaled = (data.astype(np.float64) - w.low) * (255.0 / (w.high - w.low))
    return np.clip(np.floor(scaled + 0.5), 0, 255).astype(np.uint8)
