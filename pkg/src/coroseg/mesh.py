"""Triangle surface meshes: OBJ/STL I/O, plane contours, voxelization.

OBJ is the canonical read/write format (text, stable 6-significant-digit
round trips); STL is import-only with vertex dedup. Voxelization marks the
voxels whose centers fall inside a watertight surface, via +x ray parity
with a deterministic nudge-and-retry on degenerate hits.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import FormatError, InputError, WatertightError
from .volume import Kind, Volume

Weights = tuple[tuple[tuple[str, float], ...], ...]  # per-vertex (bone_id, w)


@dataclass(frozen=True)
class SurfaceMesh:
    vertices: np.ndarray  # (n, 3) mm
    triangles: np.ndarray  # (m, 3) int
    weights: Weights | None = None
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        tris = np.asarray(self.triangles, dtype=np.int32).reshape(-1, 3)
        if tris.size and (tris.min() < 0 or tris.max() >= len(verts)):
            raise FormatError("triangle index out of range")
        if self.weights is not None:
            if len(self.weights) != len(verts):
                raise InputError("weights must cover every vertex")
            for per_vertex in self.weights:
                total = sum(w for _, w in per_vertex)
                if any(w < 0 for _, w in per_vertex) or abs(total - 1.0) > 1e-6:
                    raise InputError("vertex weights must be >= 0 and sum to 1")
        verts.flags.writeable = False
        tris.flags.writeable = False
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", tris)

    @property
    def is_watertight(self) -> bool:
        return not self.boundary_edges()

    def boundary_edges(self) -> list[tuple[int, int]]:
        """Undirected edges not shared by exactly two triangles."""
        counts: dict[tuple[int, int], int] = {}
        for a, b, c in self.triangles:
            for e in ((a, b), (b, c), (c, a)):
                key = (min(e), max(e))
                counts[key] = counts.get(key, 0) + 1
        return [e for e, n in counts.items() if n != 2]

    def with_weights(self, weights: Weights) -> "SurfaceMesh":
        return SurfaceMesh(self.vertices, self.triangles, weights, self.warnings)

    def with_vertices(self, vertices: np.ndarray) -> "SurfaceMesh":
        return SurfaceMesh(vertices, self.triangles, self.weights, self.warnings)

    def triangle_areas(self) -> np.ndarray:
        v = self.vertices
        t = self.triangles
        cross = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        return 0.5 * np.linalg.norm(cross, axis=1)


def _drop_degenerate(verts: np.ndarray, tris: np.ndarray) -> tuple[np.ndarray, list[str]]:
    warns = []
    if len(tris):
        cross = np.cross(
            verts[tris[:, 1]] - verts[tris[:, 0]], verts[tris[:, 2]] - verts[tris[:, 0]]
        )
        area2 = np.linalg.norm(cross, axis=1)
        bad = area2 < 1e-12
        if bad.any():
            warns.append(f"dropped {int(bad.sum())} zero-area triangles")
            tris = tris[~bad]
    return tris, warns


def load_mesh(path: str | Path) -> SurfaceMesh:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        mesh = _load_obj(path)
    elif suffix == ".stl":
        mesh = _load_stl(path)
    else:
        raise FormatError(f"unsupported mesh format: {path.name}")
    warns = list(mesh.warnings)
    if len(mesh.triangles) == 0:
        warns.append("mesh has no triangles")
    elif not mesh.is_watertight:
        warns.append("mesh is not watertight")
    return SurfaceMesh(mesh.vertices, mesh.triangles, mesh.weights, tuple(warns))


def _load_obj(path: Path) -> SurfaceMesh:
    verts: list[list[float]] = []
    tris: list[list[int]] = []
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "v":
            if len(parts) < 4:
                raise FormatError(f"{path.name}:{lineno}: malformed vertex")
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = []
            for tok in parts[1:]:
                i = int(tok.split("/")[0])
                # OBJ is 1-based; negatives count from the end
                idx.append(i - 1 if i > 0 else len(verts) + i)
            if len(idx) < 3:
                raise FormatError(f"{path.name}:{lineno}: face needs >= 3 vertices")
            for k in range(1, len(idx) - 1):  # fan triangulation
                tris.append([idx[0], idx[k], idx[k + 1]])
    v = np.array(verts, dtype=np.float64).reshape(-1, 3)
    t = np.array(tris, dtype=np.int32).reshape(-1, 3)
    if t.size and (t.min() < 0 or t.max() >= len(v)):
        raise FormatError(f"{path.name}: face index out of range")
    t, warns = _drop_degenerate(v, t)
    return SurfaceMesh(v, t, None, tuple(warns))


def save_mesh(m: SurfaceMesh, path: str | Path) -> None:
    """Write OBJ; coordinates at 6 significant digits, vertex order kept."""
    lines = []
    for v in m.vertices:
        lines.append(f"v {v[0]:.6g} {v[1]:.6g} {v[2]:.6g}")
    for t in m.triangles:
        lines.append(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}")
    Path(path).write_text("\n".join(lines) + "\n")


def _load_stl(path: Path) -> SurfaceMesh:
    blob = path.read_bytes()
    if len(blob) < 84:
        raise FormatError(f"{path.name}: too short for binary layout")
    (count,) = struct.unpack_from("<I", blob, 80)
    expected = 84 + 50 * count
    if len(blob) < expected:
        if blob[:6].lower() == b"solid ":
            raise FormatError(f"{path.name}: ASCII variant not supported")
        raise FormatError(f"{path.name}: truncated ({len(blob)} < {expected} bytes)")
    raw = np.frombuffer(blob, dtype=np.uint8, count=50 * count, offset=84)
    rec = raw.reshape(count, 50)
    coords = rec[:, 12:48].copy().view("<f4").reshape(count, 3, 3).astype(np.float64)
    # dedup vertices on a 1e-6 grid
    flat = coords.reshape(-1, 3)
    keys = np.round(flat / 1e-6).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")  # preserve first-appearance order
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    verts = flat[np.sort(first)]
    tris = rank[inverse].reshape(count, 3).astype(np.int32)
    tris, warns = _drop_degenerate(verts, tris)
    return SurfaceMesh(verts, tris, None, tuple(warns))


# ---------------------------------------------------------------------------
# plane contours


@dataclass(frozen=True)
class ContourSet:
    z_mm: float
    polygons: tuple[np.ndarray, ...]  # each (n, 2) mm, closed (first == last)
    z_index: int | None = None

    def total_signed_area(self) -> float:
        total = 0.0
        for poly in self.polygons:
            x, y = poly[:-1, 0], poly[:-1, 1]
            x2, y2 = poly[1:, 0], poly[1:, 1]
            total += 0.5 * float(np.sum(x * y2 - x2 * y))
        return total

    def to_json(self) -> dict:
        return {
            "z_mm": self.z_mm,
            "z_index": self.z_index,
            "polygons": [[[float(a), float(b)] for a, b in poly] for poly in self.polygons],
        }


def slice_contours(m: SurfaceMesh, z_mm: float, _max_retries: int = 6) -> ContourSet:
    """Closed loops of the mesh / axial-plane intersection at z (mm).

    Degenerate slices (a vertex exactly on the plane) retry at a nudged z.
    Loops inherit the triangle winding: with outward-oriented triangles,
    outer boundaries come out counter-clockwise and holes clockwise.
    """
    if len(m.triangles) == 0:
        return ContourSet(z_mm, ())
    z = z_mm
    for attempt in range(_max_retries):
        d = m.vertices[:, 2] - z
        if np.min(np.abs(d)) > 1e-9:
            result = _slice_at(m, d, z)
            if result is not None:
                return ContourSet(z_mm, result)
        z = z_mm + (attempt + 1) * 3.7e-7
    raise InputError(f"could not resolve a non-degenerate slice near z={z_mm}")


def _slice_at(m: SurfaceMesh, d: np.ndarray, z: float) -> tuple[np.ndarray, ...] | None:
    # crossing point per crossing edge, canonical (lo, hi) orientation
    edge_points: dict[tuple[int, int], np.ndarray] = {}

    def edge_point(i: int, j: int) -> np.ndarray:
        key = (i, j) if i < j else (j, i)
        pt = edge_points.get(key)
        if pt is None:
            a, b = key
            t = d[a] / (d[a] - d[b])
            pt = m.vertices[a][:2] + t * (m.vertices[b][:2] - m.vertices[a][:2])
            edge_points[key] = pt
        return pt

    segments: list[tuple[tuple[int, int], tuple[int, int]]] = []
    for tri in m.triangles:
        below = [v for v in tri if d[v] < 0]
        above = [v for v in tri if d[v] > 0]
        if not below or not above:
            continue
        # the lone vertex determines the two crossing edges; winding order of
        # (a, b, c) fixes the segment direction so loops are consistently
        # oriented with the surface
        a, b, c = tri
        if len(below) == 1:
            lone = below[0]
        else:
            lone = above[0]
        if lone == a:
            e1, e2 = (a, b), (c, a)
        elif lone == b:
            e1, e2 = (b, c), (a, b)
        else:
            e1, e2 = (c, a), (b, c)
        if d[lone] < 0:
            segments.append((_ckey(e2), _ckey(e1)))
        else:
            segments.append((_ckey(e1), _ckey(e2)))

    if not segments:
        return ()
    nxt: dict[tuple[int, int], tuple[int, int]] = {}
    for start, end in segments:
        if start in nxt:
            return None  # non-manifold crossing; retry at nudged z
        nxt[start] = end
    loops: list[np.ndarray] = []
    remaining = dict(nxt)
    while remaining:
        start = next(iter(remaining))
        chain = [start]
        cur = remaining.pop(start)
        while cur != start:
            chain.append(cur)
            if cur not in remaining:
                raise WatertightError(
                    f"open contour chain at z={z}: {len(chain)} segments, no closure"
                )
            cur = remaining.pop(cur)
        pts = np.array([edge_point(*e) for e in chain] + [edge_point(*start)])
        loops.append(pts)
    return tuple(loops)


def _ckey(e: tuple[int, int]) -> tuple[int, int]:
    return e if e[0] < e[1] else (e[1], e[0])


# ---------------------------------------------------------------------------
# voxelization

_NUDGES = np.array([1.31e-4, 1.73e-4, 1.93e-4])


def voxelize(m: SurfaceMesh, grid: Volume) -> Volume:
    """Mask of grid-voxel centers inside the (watertight) mesh."""
    bad = m.boundary_edges()
    if len(m.triangles) == 0 or bad:
        raise WatertightError(
            f"voxelization needs a watertight mesh ({len(bad)} unshared edges)"
        )
    idx = grid.mm_to_index(m.vertices)
    tris = idx[m.triangles]
    for level in range(6):
        shifted = tris + level * _NUDGES
        mask, ok = _kernels.parity_fill(shifted, grid.dims)
        if ok:
            return Volume(mask, grid.spacing, grid.origin, grid.direction, Kind.LABEL)
    raise InputError("voxelization failed: degenerate ray hits persisted through retries")
