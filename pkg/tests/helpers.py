"""Shared phantom builders and independent oracles for the test suite.

Oracles here deliberately avoid the library's code paths: flood fill is a
hand-rolled BFS, trilinear sampling is per-point arithmetic, and rank tests
are enumerated from pairwise comparisons.
"""

from __future__ import annotations

import math
from collections import deque
from itertools import combinations
from pathlib import Path

import numpy as np

from coroseg.volume import Kind, Volume


def make_label(data, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0), direction=None):
    if direction is None:
        direction = np.eye(3)
    return Volume(np.asarray(data, dtype=np.uint8), spacing, origin, direction, Kind.LABEL)


def make_intensity(data, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0), direction=None):
    if direction is None:
        direction = np.eye(3)
    return Volume(np.asarray(data), spacing, origin, direction, Kind.INTENSITY)


# ---------------------------------------------------------------------------
# component oracle: plain BFS flood fill, scan-order component numbering


def flood_fill_components(mask: np.ndarray, connectivity: int = 26):
    """Returns (labels, count); independent of the library's labeling."""
    mask = np.asarray(mask) != 0
    nx, ny, nz = mask.shape
    if connectivity == 26:
        offs = [
            (dx, dy, dz)
            for dx in (-1, 0, 1)
            for dy in (-1, 0, 1)
            for dz in (-1, 0, 1)
            if (dx, dy, dz) != (0, 0, 0)
        ]
    else:
        offs = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
    labels = np.zeros(mask.shape, dtype=np.int32)
    count = 0
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if not mask[i, j, k] or labels[i, j, k]:
                    continue
                count += 1
                q = deque([(i, j, k)])
                labels[i, j, k] = count
                while q:
                    ci, cj, ck = q.popleft()
                    for dx, dy, dz in offs:
                        ni, nj, nk = ci + dx, cj + dy, ck + dz
                        if 0 <= ni < nx and 0 <= nj < ny and 0 <= nk < nz:
                            if mask[ni, nj, nk] and not labels[ni, nj, nk]:
                                labels[ni, nj, nk] = count
                                q.append((ni, nj, nk))
    return labels, count


# ---------------------------------------------------------------------------
# trilinear oracle: one point at a time, from the textbook formula


def trilinear_at(data: np.ndarray, x: float, y: float, z: float) -> float:
    nx, ny, nz = data.shape
    x = min(max(x, 0.0), nx - 1.0)
    y = min(max(y, 0.0), ny - 1.0)
    z = min(max(z, 0.0), nz - 1.0)
    i0 = min(int(math.floor(x)), max(nx - 2, 0))
    j0 = min(int(math.floor(y)), max(ny - 2, 0))
    k0 = min(int(math.floor(z)), max(nz - 2, 0))
    i1, j1, k1 = min(i0 + 1, nx - 1), min(j0 + 1, ny - 1), min(k0 + 1, nz - 1)
    fx, fy, fz = x - i0, y - j0, z - k0
    out = 0.0
    for ii, wx in ((i0, 1 - fx), (i1, fx)):
        for jj, wy in ((j0, 1 - fy), (j1, fy)):
            for kk, wz in ((k0, 1 - fz), (k1, fz)):
                out += float(data[ii, jj, kk]) * wx * wy * wz
    return out


# ---------------------------------------------------------------------------
# phantom masks


def tube_mask(dims, p0, p1, radius):
    """Solid tube between two index-space points."""
    grid = np.stack(
        np.meshgrid(*[np.arange(n, dtype=np.float64) for n in dims], indexing="ij"), axis=-1
    )
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    d = p1 - p0
    L2 = float(d @ d)
    rel = grid - p0
    t = np.clip((rel @ d) / L2 if L2 > 0 else np.zeros(grid.shape[:-1]), 0.0, 1.0)
    closest = p0 + t[..., None] * d
    dist = np.linalg.norm(grid - closest, axis=-1)
    return (dist <= radius).astype(np.uint8)


def random_tube_phantom(rng: np.random.Generator, dims=(32, 32, 32), y_shape=False):
    """One or two tubes (Y when y_shape) fully inside the grid."""
    dims = np.asarray(dims)
    lo = dims * 0.2
    hi = dims * 0.8
    p0 = rng.uniform(lo, hi)
    p1 = rng.uniform(lo, hi)
    while np.linalg.norm(p1 - p0) < dims.min() * 0.3:
        p1 = rng.uniform(lo, hi)
    r = float(rng.uniform(1.5, 3.0))
    m = tube_mask(tuple(dims), p0, p1, r)
    if y_shape:
        mid = 0.5 * (p0 + p1)
        p2 = rng.uniform(lo, hi)
        while np.linalg.norm(p2 - mid) < dims.min() * 0.25:
            p2 = rng.uniform(lo, hi)
        m |= tube_mask(tuple(dims), mid, p2, r)
    return m


# ---------------------------------------------------------------------------
# rank-test oracles, built on pairwise comparisons (not rank sums)


def mwu_oracle(a, b):
    """Exact two-sided Mann-Whitney p by enumerating group assignments.

    The statistic for a split is computed by direct pairwise counting:
    U1 = #(a_i > b_j) + 0.5 #(a_i == b_j).
    """
    a, b = list(a), list(b)
    pooled = a + b
    n1 = len(a)

    def u1_of(first):
        second = [pooled[i] for i in range(len(pooled)) if i not in set(first)]
        u = 0.0
        for x in (pooled[i] for i in first):
            for y in second:
                if x > y:
                    u += 1.0
                elif x == y:
                    u += 0.5
        return u

    u1_obs = u1_of(range(n1))
    u_obs = min(u1_obs, n1 * (len(pooled) - n1) - u1_obs)
    total = 0
    hits = 0
    for comb in combinations(range(len(pooled)), n1):
        total += 1
        if u1_of(comb) <= u_obs + 1e-9:
            hits += 1
    return u_obs, min(1.0, 2.0 * hits / total)


# ---------------------------------------------------------------------------
# mesh builders (outward winding) and a divergence-theorem volume oracle


def mesh_volume(m) -> float:
    """Signed volume via the divergence theorem; positive when outward-wound."""
    v = np.asarray(m.vertices)
    t = np.asarray(m.triangles)
    a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    return float(np.sum(np.einsum("ij,ij->i", a, np.cross(b, c))) / 6.0)


def cube_mesh(lo, hi):
    from coroseg.mesh import SurfaceMesh

    lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), (3,))
    hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), (3,))
    corner = lambda bx, by, bz: [hi[0] if bx else lo[0], hi[1] if by else lo[1], hi[2] if bz else lo[2]]
    verts = np.array([corner(b & 1, b >> 1 & 1, b >> 2 & 1) for b in range(8)])
    # quads listed counter-clockwise as seen from outside the box
    quads = [
        (0, 4, 6, 2),  # -x
        (1, 3, 7, 5),  # +x
        (0, 1, 5, 4),  # -y
        (2, 6, 7, 3),  # +y
        (0, 2, 3, 1),  # -z
        (4, 5, 7, 6),  # +z
    ]
    tris = []
    for q in quads:
        tris.append([q[0], q[1], q[2]])
        tris.append([q[0], q[2], q[3]])
    return SurfaceMesh(verts, np.array(tris, dtype=np.int32))


def uv_sphere(center, radius, nlat=24, nlon=32):
    from coroseg.mesh import SurfaceMesh

    center = np.asarray(center, dtype=np.float64)
    verts = [center + [0.0, 0.0, radius]]
    for i in range(1, nlat):
        th = math.pi * i / nlat
        for j in range(nlon):
            ph = 2.0 * math.pi * j / nlon
            verts.append(
                center
                + radius * np.array([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])
            )
    verts.append(center + [0.0, 0.0, -radius])
    south = len(verts) - 1
    ring = lambda i, j: 1 + (i - 1) * nlon + (j % nlon)
    tris = []
    for j in range(nlon):
        tris.append([0, ring(1, j), ring(1, j + 1)])
    for i in range(1, nlat - 1):
        for j in range(nlon):
            u0, u1 = ring(i, j), ring(i, j + 1)
            l0, l1 = ring(i + 1, j), ring(i + 1, j + 1)
            tris.append([u0, l0, l1])
            tris.append([u0, l1, u1])
    for j in range(nlon):
        tris.append([south, ring(nlat - 1, j + 1), ring(nlat - 1, j)])
    return SurfaceMesh(np.array(verts), np.array(tris, dtype=np.int32))


def torus_mesh(center, ring_radius, tube_radius, nu=48, nv=24):
    from coroseg.mesh import SurfaceMesh

    center = np.asarray(center, dtype=np.float64)
    verts = np.empty((nu * nv, 3))
    for i in range(nu):
        u = 2.0 * math.pi * i / nu
        for j in range(nv):
            v = 2.0 * math.pi * j / nv
            w = ring_radius + tube_radius * math.cos(v)
            verts[i * nv + j] = center + [
                w * math.cos(u),
                w * math.sin(u),
                tube_radius * math.sin(v),
            ]
    tris = []
    at = lambda i, j: (i % nu) * nv + (j % nv)
    for i in range(nu):
        for j in range(nv):
            p00, p10 = at(i, j), at(i + 1, j)
            p11, p01 = at(i + 1, j + 1), at(i, j + 1)
            tris.append([p00, p10, p11])
            tris.append([p00, p11, p01])
    return SurfaceMesh(verts, np.array(tris, dtype=np.int32))


def cylinder_mesh(center_xy, z0, z1, radius, nseg=16, nring=13):
    """Closed tube along z: side quads plus two cap fans, outward-wound."""
    from coroseg.mesh import SurfaceMesh

    cx, cy = float(center_xy[0]), float(center_xy[1])
    verts = []
    for z in np.linspace(z0, z1, nring):
        for j in range(nseg):
            ph = 2.0 * math.pi * j / nseg
            verts.append([cx + radius * math.cos(ph), cy + radius * math.sin(ph), z])
    bot = len(verts)
    verts.append([cx, cy, z0])
    top = len(verts)
    verts.append([cx, cy, z1])
    at = lambda i, j: i * nseg + (j % nseg)
    tris = []
    for i in range(nring - 1):
        for j in range(nseg):
            p00, p01 = at(i, j), at(i, j + 1)
            p10, p11 = at(i + 1, j), at(i + 1, j + 1)
            tris.append([p00, p01, p11])
            tris.append([p00, p11, p10])
    for j in range(nseg):
        tris.append([bot, at(0, j + 1), at(0, j)])
        tris.append([top, at(nring - 1, j), at(nring - 1, j + 1)])
    return SurfaceMesh(np.array(verts), np.array(tris, dtype=np.int32))


def build_case_dir(case_dir):
    """Write a self-consistent synthetic case: a straight vessel along z.

    The scan is 24x24x48 at 0.5 mm with a bright tube matching the mesh, so
    slicing, windowing, voxelization, and auto-skeletonization all agree.
    """
    from coroseg.mesh import save_mesh
    from coroseg.volume import Volume, Kind, write_volume

    case_dir = Path(case_dir)
    case_dir.mkdir(parents=True, exist_ok=True)
    mask = tube_mask((24, 24, 48), (12, 12, 4), (12, 12, 42), 3.2)
    data = np.where(mask, 100, -100).astype(np.int16)
    vol = Volume(data, (0.5, 0.5, 0.5), (0.0, 0.0, 0.0), np.eye(3), Kind.INTENSITY)
    write_volume(vol, case_dir / "scan.nii.gz")
    mesh = cylinder_mesh((6.0, 6.0), 2.0, 21.0, 1.6)
    save_mesh(mesh, case_dir / "tree.obj")
    return case_dir


def wilcoxon_oracle(diffs):
    """Exact two-sided signed-rank p by enumerating every sign assignment."""
    d = [x for x in diffs if x != 0]
    n = len(d)
    mags = sorted(abs(x) for x in d)
    ranks = []
    for x in d:
        a = abs(x)
        lo = mags.index(a)
        hi = lo + mags.count(a) - 1
        ranks.append(0.5 * (lo + hi) + 1.0)
    w_plus = sum(r for x, r in zip(d, ranks) if x > 0)
    total_rank = sum(ranks)
    w_obs = min(w_plus, total_rank - w_plus)
    hits = 0
    for signs in range(2**n):
        wp = sum(ranks[i] for i in range(n) if signs >> i & 1)
        if wp <= w_obs + 1e-9:
            hits += 1
    return w_obs, min(1.0, 2.0 * hits / 2**n)
