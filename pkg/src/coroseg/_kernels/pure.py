"""NumPy/SciPy reference implementations of the voxel kernels.

These are the fallback when the compiled extension is unavailable, and the
ground truth the compiled module is tested against. Three kernels live here:

* ``label_components`` — connected-component labeling, labels assigned by
  first-visited row-major scan order;
* ``thin`` — topology-preserving 3D thinning (6 directional sub-iterations,
  simple-point deletion, endpoints kept);
* ``parity_fill`` — even/odd interior fill from triangle crossings along +x
  rows, with degeneracy reporting.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

BACKEND = "pure"

# ---------------------------------------------------------------------------
# 3x3x3 neighborhood tables. Cells are flat-indexed in C order of the
# (dx, dy, dz) offsets, so the center is 13 and a padded-array slab
# ``a[x-1:x+2, y-1:y+2, z-1:z+2].ravel()`` lines up with these indices.

_OFFSETS = [(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)]
_CENTER = 13
_N26 = [i for i in range(27) if i != _CENTER]
_N18 = [i for i in _N26 if sum(abs(c) for c in _OFFSETS[i]) <= 2]
_N6 = [i for i in _N26 if sum(abs(c) for c in _OFFSETS[i]) == 1]

_ADJ26 = [
    [
        j
        for j in _N26
        if j != i
        and max(abs(_OFFSETS[i][a] - _OFFSETS[j][a]) for a in range(3)) == 1
    ]
    if i in _N26
    else []
    for i in range(27)
]
_ADJ6_18 = [
    [
        j
        for j in _N18
        if sum(abs(_OFFSETS[i][a] - _OFFSETS[j][a]) for a in range(3)) == 1
    ]
    if i in _N18
    else []
    for i in range(27)
]

# Sub-iteration peel directions, fixed order: +z, -z, +y, -y, +x, -x.
_DIRECTIONS = [(0, 0, 1), (0, 0, -1), (0, 1, 0), (0, -1, 0), (1, 0, 0), (-1, 0, 0)]

_COUNT_KERNEL = np.ones((3, 3, 3), dtype=np.uint8)
_COUNT_KERNEL[1, 1, 1] = 0


def _is_simple(nb) -> bool:
    """Simple-point test on a flat 27-cell neighborhood (center foreground).

    Deleting the center preserves local topology iff the foreground in the
    26-neighborhood is a single 26-connected piece AND the background in the
    18-neighborhood forms a single 6-connected piece touching a face.
    """
    comps = 0
    seen = bytearray(27)
    for i in _N26:
        if nb[i] and not seen[i]:
            comps += 1
            if comps > 1:
                return False
            stack = [i]
            seen[i] = 1
            while stack:
                c = stack.pop()
                for j in _ADJ26[c]:
                    if nb[j] and not seen[j]:
                        seen[j] = 1
                        stack.append(j)
    if comps != 1:
        return False

    comps = 0
    seen = bytearray(27)
    for i in _N6:
        if not nb[i] and not seen[i]:
            comps += 1
            if comps > 1:
                return False
            stack = [i]
            seen[i] = 1
            while stack:
                c = stack.pop()
                for j in _ADJ6_18[c]:
                    if not nb[j] and not seen[j]:
                        seen[j] = 1
                        stack.append(j)
    return comps == 1


def thin(mask: np.ndarray) -> np.ndarray:
    """Thin a binary volume to a unit-width skeleton.

    Six directional sub-iterations per pass; candidates are gathered
    simultaneously from the pre-sub-iteration state, then deleted one by one
    in scan order with a live re-check, which keeps the result deterministic
    and topology-safe. Voxels with a single foreground neighbor (curve ends)
    are never deleted. Runs to a fixpoint.
    """
    nx, ny, nz = mask.shape
    pad = np.zeros((nx + 2, ny + 2, nz + 2), dtype=bool)
    pad[1:-1, 1:-1, 1:-1] = mask != 0
    interior = pad[1:-1, 1:-1, 1:-1]

    while True:
        deleted = 0
        for dx, dy, dz in _DIRECTIONS:
            snap = pad.copy()
            snap_in = snap[1:-1, 1:-1, 1:-1]
            counts = ndimage.convolve(
                snap_in.astype(np.uint8), _COUNT_KERNEL, mode="constant"
            )
            face_bg = ~snap[1 + dx : 1 + dx + nx, 1 + dy : 1 + dy + ny, 1 + dz : 1 + dz + nz]
            cand = snap_in & face_bg & (counts >= 2)
            for i, j, k in np.argwhere(cand):
                if not _is_simple(snap[i : i + 3, j : j + 3, k : k + 3].ravel()):
                    continue
                live = pad[i : i + 3, j : j + 3, k : k + 3]
                flat = live.ravel()
                n_nb = int(flat.sum()) - 1
                if n_nb < 2 or not _is_simple(flat):
                    continue
                pad[i + 1, j + 1, k + 1] = False
                deleted += 1
        if not deleted:
            break
    return interior.astype(np.uint8)


def label_components(mask: np.ndarray, connectivity: int = 26):
    """Label connected foreground; returns (int32 labels, count).

    Component c gets label c where components are ordered by the scan-order
    position of their first voxel (row-major over (i, j, k)).
    """
    if connectivity == 26:
        structure = np.ones((3, 3, 3), dtype=bool)
    elif connectivity == 6:
        structure = ndimage.generate_binary_structure(3, 1)
    else:
        raise ValueError(f"connectivity must be 6 or 26, got {connectivity}")
    raw, n = ndimage.label(mask != 0, structure=structure)
    if n == 0:
        return raw.astype(np.int32), 0
    flat = raw.ravel()
    nz = np.flatnonzero(flat)
    first = np.full(n + 1, flat.size, dtype=np.int64)
    np.minimum.at(first, flat[nz], nz)
    order = np.argsort(first[1:], kind="stable")
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[order + 1] = np.arange(1, n + 1, dtype=np.int32)
    return remap[raw], n


_DEGEN_EPS = 1e-9
_PLANE_EPS = 1e-12


def parity_fill(tris: np.ndarray, dims) -> tuple[np.ndarray, bool]:
    """Fill voxel centers interior to a closed triangle surface.

    ``tris`` is (m, 3, 3) in continuous index coordinates. Rays run along +x
    through every integer (y=j, z=k); centers between an odd/even crossing
    pair are set. Returns (mask, ok); ok=False signals a degenerate
    configuration (ray in a triangle plane, edge/vertex hit, or a crossing
    within 1e-9 of a voxel center) — the caller retries with a nudge.
    """
    nx, ny, nz = (int(d) for d in dims)
    mask = np.zeros((nx, ny, nz), dtype=np.uint8)
    if len(tris) == 0:
        return mask, True

    js_all: list[np.ndarray] = []
    ks_all: list[np.ndarray] = []
    xs_all: list[np.ndarray] = []
    for tri in np.asarray(tris, dtype=np.float64):
        (x0, y0, z0), (x1, y1, z1), (x2, y2, z2) = tri
        den = (y1 - y0) * (z2 - z0) - (y2 - y0) * (z1 - z0)
        jlo = max(int(np.ceil(min(y0, y1, y2) - _DEGEN_EPS)), 0)
        jhi = min(int(np.floor(max(y0, y1, y2) + _DEGEN_EPS)), ny - 1)
        klo = max(int(np.ceil(min(z0, z1, z2) - _DEGEN_EPS)), 0)
        khi = min(int(np.floor(max(z0, z1, z2) + _DEGEN_EPS)), nz - 1)
        if jlo > jhi or klo > khi:
            continue
        J, K = np.meshgrid(
            np.arange(jlo, jhi + 1, dtype=np.float64),
            np.arange(klo, khi + 1, dtype=np.float64),
            indexing="ij",
        )
        if abs(den) < _PLANE_EPS:
            # Ray-parallel triangle: contributes no crossings. It is only
            # ambiguous when a ray runs through its edge-on sliver, i.e. a
            # lattice point sits within eps of a projected edge.
            for ay, az, by, bz in ((y0, z0, y1, z1), (y1, z1, y2, z2), (y2, z2, y0, z0)):
                dy, dz = by - ay, bz - az
                seg2 = dy * dy + dz * dz
                if seg2 == 0.0:
                    t = np.zeros_like(J)
                else:
                    t = np.clip(((J - ay) * dy + (K - az) * dz) / seg2, 0.0, 1.0)
                d2 = (J - (ay + t * dy)) ** 2 + (K - (az + t * dz)) ** 2
                if np.any(d2 < _DEGEN_EPS * _DEGEN_EPS):
                    return mask, False
            continue
        u = ((J - y0) * (z2 - z0) - (y2 - y0) * (K - z0)) / den
        v = ((y1 - y0) * (K - z0) - (J - y0) * (z1 - z0)) / den
        w = 1.0 - u - v
        lo = np.minimum(np.minimum(u, v), w)
        if np.any((lo > -_DEGEN_EPS) & (lo < _DEGEN_EPS)):
            return mask, False
        inside = lo > 0
        if not inside.any():
            continue
        ui, vi = u[inside], v[inside]
        x = x0 + ui * (x1 - x0) + vi * (x2 - x0)
        near_center = np.abs(x - np.round(x)) < _DEGEN_EPS
        if np.any(near_center & (np.round(x) >= 0) & (np.round(x) <= nx - 1)):
            return mask, False
        js_all.append(J[inside].astype(np.intp))
        ks_all.append(K[inside].astype(np.intp))
        xs_all.append(x)

    if not js_all:
        return mask, True
    j = np.concatenate(js_all)
    k = np.concatenate(ks_all)
    x = np.concatenate(xs_all)
    order = np.lexsort((x, k, j))
    j, k, x = j[order], k[order], x[order]
    row = j * nz + k
    starts = np.flatnonzero(np.r_[True, row[1:] != row[:-1]])
    ends = np.r_[starts[1:], row.size]
    for s, e in zip(starts, ends):
        if (e - s) % 2:
            return mask, False  # open surface along this ray
        rj, rk = int(j[s]), int(k[s])
        for a in range(s, e, 2):
            xa = int(np.floor(x[a])) + 1
            xb = int(np.ceil(x[a + 1])) - 1
            if xb >= 0 and xa <= nx - 1:
                mask[max(xa, 0) : min(xb, nx - 1) + 1, rj, rk] = 1
    return mask, True
