"""Stretched curved planar reformation along a vessel centerline.

Rows follow arclength; columns sweep the transverse direction given by a
rotation-minimizing frame (parallel transport), which stays stable on
straight runs and never flips at inflections. Out-of-volume samples take
an air sentinel so the images window naturally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .volume import Volume, sample_trilinear

SENTINEL_HU = -1024.0


@dataclass(frozen=True)
class CprImage:
    pixels: np.ndarray  # (rows, cols) HU
    ds: float  # row spacing, mm along the path
    dt: float  # column spacing, mm across it
    half_width_mm: float
    centers: np.ndarray  # (rows, 3) mm
    tangents: np.ndarray  # (rows, 3)
    normals: np.ndarray  # (rows, 3)
    binormals: np.ndarray  # (rows, 3)

    @property
    def rows(self) -> int:
        return self.pixels.shape[0]

    @property
    def cols(self) -> int:
        return self.pixels.shape[1]


def _clean_path(path) -> tuple[np.ndarray, np.ndarray, float]:
    pts = np.asarray(path, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 2:
        raise InputError("path needs at least 2 points")
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    total = float(seg.sum())
    if total <= 0:
        raise InputError("path has zero length")
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    return pts, cum, total


def _at_arclength(pts: np.ndarray, cum: np.ndarray, s: np.ndarray) -> np.ndarray:
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(pts) - 2)
    span = cum[idx + 1] - cum[idx]
    t = np.where(span > 0, (s - cum[idx]) / np.where(span > 0, span, 1.0), 0.0)
    return pts[idx] + t[:, None] * (pts[idx + 1] - pts[idx])


def _tangents(centers: np.ndarray) -> np.ndarray:
    t = np.empty_like(centers)
    t[1:-1] = centers[2:] - centers[:-2]
    t[0] = centers[1] - centers[0]
    t[-1] = centers[-1] - centers[-2]
    norms = np.linalg.norm(t, axis=1)
    for i in range(len(t)):  # carry the previous direction over stalls
        if norms[i] < 1e-12:
            t[i] = t[i - 1] if i else [0.0, 0.0, 1.0]
        else:
            t[i] = t[i] / norms[i]
    return t


def _initial_normal(centers: np.ndarray, tangents: np.ndarray) -> np.ndarray:
    t0 = tangents[0]
    # prefer the first curvature direction: it rotates with the geometry, so
    # rigidly moving (volume, path) together leaves the image unchanged
    for i in range(1, len(tangents)):
        dev = tangents[i] - tangents[i] @ t0 * t0
        if np.linalg.norm(dev) > 1e-8:
            return dev / np.linalg.norm(dev)
    ref = np.array([1.0, 0.0, 0.0])
    if abs(t0 @ ref) > 0.9:
        ref = np.array([0.0, 1.0, 0.0])
    n0 = ref - (ref @ t0) * t0
    return n0 / np.linalg.norm(n0)


def _transport_frames(centers: np.ndarray, tangents: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = np.empty_like(tangents)
    n[0] = _initial_normal(centers, tangents)
    for i in range(1, len(tangents)):
        proj = n[i - 1] - (n[i - 1] @ tangents[i]) * tangents[i]
        norm = np.linalg.norm(proj)
        if norm < 1e-9:  # right-angle kink: continue via the previous binormal
            proj = np.cross(np.cross(tangents[i - 1], n[i - 1]), tangents[i])
            norm = np.linalg.norm(proj)
            if norm < 1e-12:
                proj, norm = n[i - 1], 1.0
        n[i] = proj / norm
    b = np.cross(tangents, n)
    b /= np.linalg.norm(b, axis=1, keepdims=True)
    return n, b


def cpr(
    volume: Volume,
    path,
    half_width_mm: float = 5.0,
    ds: float = 0.35,
    dt: float = 0.35,
) -> CprImage:
    """Stretched CPR image: one row per arclength step along the path."""
    if half_width_mm <= 0 or ds <= 0 or dt <= 0:
        raise InputError("half_width, ds and dt must be positive")
    pts, cum, total = _clean_path(path)
    nrows = int(np.floor(total / ds + 1e-9)) + 1
    s = np.arange(nrows) * ds
    centers = _at_arclength(pts, cum, s)
    tangents = _tangents(centers)
    normals, binormals = _transport_frames(centers, tangents)
    m = int(np.floor(half_width_mm / dt + 1e-9))
    offsets = (np.arange(2 * m + 1) - m) * dt
    samples = centers[:, None, :] + offsets[None, :, None] * normals[:, None, :]
    pixels = sample_trilinear(volume, samples.reshape(-1, 3), outside=SENTINEL_HU)
    return CprImage(
        pixels.reshape(nrows, 2 * m + 1),
        ds,
        dt,
        half_width_mm,
        centers,
        tangents,
        normals,
        binormals,
    )


def short_axis_cut(
    volume: Volume,
    path,
    s_mm: float,
    half_width_mm: float = 5.0,
    dt: float = 0.35,
) -> np.ndarray:
    """Square patch orthogonal to the path tangent at arclength s (inclusive ends)."""
    if half_width_mm <= 0 or dt <= 0:
        raise InputError("half_width and dt must be positive")
    pts, cum, total = _clean_path(path)
    if not -1e-9 <= s_mm <= total + 1e-9:
        raise InputError(f"s={s_mm} outside [0, {total}]")
    s_mm = min(max(s_mm, 0.0), total)
    nrows = int(np.floor(total / dt + 1e-9)) + 1
    grid_s = np.arange(nrows) * dt
    centers = _at_arclength(pts, cum, grid_s)
    tangents = _tangents(centers)
    normals, binormals = _transport_frames(centers, tangents)
    i = min(int(round(s_mm / dt)), nrows - 1)
    center = _at_arclength(pts, cum, np.array([s_mm]))[0]
    n, b = normals[i], binormals[i]
    m = int(np.floor(half_width_mm / dt + 1e-9))
    off = (np.arange(2 * m + 1) - m) * dt
    samples = center + off[:, None, None] * n + off[None, :, None] * b
    vals = sample_trilinear(volume, samples.reshape(-1, 3), outside=SENTINEL_HU)
    return vals.reshape(2 * m + 1, 2 * m + 1)
