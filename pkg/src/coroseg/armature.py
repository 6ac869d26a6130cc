"""Skeletal parameterization of a vessel tree: bones, poses, skinning.

A centerline graph becomes a tree of short bones; mesh vertices get
inverse-square distance weights to their nearest bones; posing rotates
bones about their (posed) heads with rigid inheritance down the subtree,
and the mesh follows by linear blend skinning.

Quaternions are ``[w, x, y, z]`` with the Hamilton product, acting on
column vectors, so ``rot(q1 @ q2) == rot(q1) @ rot(q2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import (
    DisconnectedGraphError,
    InputError,
    MissingRootError,
    MissingWeightsError,
    RootCutError,
    UnknownBoneError,
)
from .mesh import SurfaceMesh
from .skeleton import CenterlineGraph, NodeKind

_COINCIDE_TOL = 1e-6


# ---------------------------------------------------------------------------
# quaternions


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_from_axis_angle(axis, angle_rad: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n == 0:
        raise InputError("rotation axis must be nonzero")
    half = 0.5 * angle_rad
    q = np.empty(4)
    q[0] = math.cos(half)
    q[1:] = axis / n * math.sin(half)
    return q


def quat_multiply(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def _check_unit(q, what: str) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64).reshape(4)
    n = float(np.linalg.norm(q))
    if abs(n - 1.0) > 1e-6:
        raise InputError(f"{what} must be a unit quaternion")
    # renormalizing an already-unit value would shuffle its last bits and
    # break byte-stable pose round-trips, so only correct genuine drift
    return q if abs(n - 1.0) < 1e-12 else q / n


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class Bone:
    id: str
    parent_id: str | None
    head: np.ndarray  # (3,) mm, rest
    tail: np.ndarray  # (3,) mm, rest

    def __post_init__(self):
        head = np.asarray(self.head, dtype=np.float64).reshape(3).copy()
        tail = np.asarray(self.tail, dtype=np.float64).reshape(3).copy()
        if not np.linalg.norm(tail - head) > 0:
            raise InputError(f"bone {self.id} has zero length")
        head.flags.writeable = False
        tail.flags.writeable = False
        object.__setattr__(self, "head", head)
        object.__setattr__(self, "tail", tail)

    @property
    def rest_length(self) -> float:
        return float(np.linalg.norm(self.tail - self.head))


@dataclass(frozen=True)
class Armature:
    bones: tuple[Bone, ...]  # topological order, root first

    def __post_init__(self):
        buf = tuple(self.bones)
        object.__setattr__(self, "bones", buf)
        seen: dict[str, Bone] = {}
        roots = 0
        for b in buf:
            if b.id in seen:
                raise InputError(f"duplicate bone id {b.id}")
            if b.parent_id is None:
                roots += 1
            else:
                parent = seen.get(b.parent_id)
                if parent is None:
                    raise InputError(f"bone {b.id}: parent {b.parent_id} must precede it")
                if np.linalg.norm(b.head - parent.tail) > _COINCIDE_TOL:
                    raise InputError(f"bone {b.id}: head does not meet parent tail")
            seen[b.id] = b
        if buf and roots != 1:
            raise InputError(f"armature needs exactly one root bone, found {roots}")
        object.__setattr__(self, "_by_id", seen)

    def __len__(self) -> int:
        return len(self.bones)

    @property
    def root(self) -> Bone:
        return self.bones[0]

    def bone(self, bone_id: str) -> Bone:
        b = self._by_id.get(bone_id)
        if b is None:
            raise UnknownBoneError(f"no bone {bone_id!r}")
        return b

    def __contains__(self, bone_id: str) -> bool:
        return bone_id in self._by_id

    def children(self, bone_id: str) -> tuple[str, ...]:
        return tuple(b.id for b in self.bones if b.parent_id == bone_id)

    def subtree(self, bone_id: str) -> tuple[str, ...]:
        """bone_id plus every descendant, in bone order."""
        self.bone(bone_id)
        keep = {bone_id}
        out = []
        for b in self.bones:
            if b.id in keep or (b.parent_id in keep):
                keep.add(b.id)
                out.append(b.id)
        return tuple(out)


@dataclass(frozen=True)
class Pose:
    global_rotation: np.ndarray = field(default_factory=quat_identity)
    global_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    local: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        q = _check_unit(self.global_rotation, "global rotation")
        t = np.asarray(self.global_translation, dtype=np.float64).reshape(3).copy()
        q.flags.writeable = False
        t.flags.writeable = False
        loc = {}
        for bone_id, lq in dict(self.local).items():
            lq = _check_unit(lq, f"local rotation of {bone_id}")
            lq.flags.writeable = False
            loc[bone_id] = lq
        object.__setattr__(self, "global_rotation", q)
        object.__setattr__(self, "global_translation", t)
        object.__setattr__(self, "local", MappingProxyType(loc))

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    def is_identity(self) -> bool:
        if self.global_translation.any():
            return False
        if not np.array_equal(np.abs(self.global_rotation), [1.0, 0.0, 0.0, 0.0]):
            return False
        for q in self.local.values():
            if not np.array_equal(np.abs(q), [1.0, 0.0, 0.0, 0.0]):
                return False
        return True

    def local_rotation(self, bone_id: str) -> np.ndarray:
        return self.local.get(bone_id, quat_identity())

    def with_local(self, bone_id: str, q: np.ndarray) -> "Pose":
        loc = dict(self.local)
        loc[bone_id] = q
        return Pose(self.global_rotation, self.global_translation, loc)

    def with_global(self, rotation, translation) -> "Pose":
        return Pose(rotation, translation, dict(self.local))

    def restricted_to(self, a: Armature) -> "Pose":
        loc = {k: v for k, v in self.local.items() if k in a}
        return Pose(self.global_rotation, self.global_translation, loc)

    def validate_for(self, a: Armature) -> None:
        for bone_id in self.local:
            if bone_id not in a:
                raise UnknownBoneError(f"pose references unknown bone {bone_id!r}")


# ---------------------------------------------------------------------------
# construction from a centerline graph


def build_armature(g: CenterlineGraph, max_bone_length_mm: float = 3.0) -> Armature:
    """Subdivide each centerline edge into equal bones of ≤ max length."""
    if max_bone_length_mm <= 0:
        raise InputError("max bone length must be positive")
    root_nodes = [i for i, n in enumerate(g.nodes) if n.kind is NodeKind.ROOT]
    if not root_nodes:
        raise MissingRootError("graph has no designated root node")
    if len(root_nodes) > 1:
        raise InputError("graph has more than one root node")
    root = root_nodes[0]
    if not g.edges:
        raise InputError("graph has no edges to build bones from")

    incident: dict[int, list[int]] = {i: [] for i in range(len(g.nodes))}
    for ei, e in enumerate(g.edges):
        incident[e.a].append(ei)
        if e.b != e.a:
            incident[e.b].append(ei)

    reach = {root}
    frontier = [root]
    while frontier:
        n = frontier.pop()
        for ei in incident[n]:
            for other in (g.edges[ei].a, g.edges[ei].b):
                if other not in reach:
                    reach.add(other)
                    frontier.append(other)
    if len(reach) != len(g.nodes):
        raise DisconnectedGraphError(
            f"{len(g.nodes) - len(reach)} nodes unreachable from the root"
        )
    if len(incident[root]) != 1:
        raise InputError("root node must have exactly one incident edge")

    bones: list[Bone] = []
    used_edges: set[int] = set()
    # stack of (node, edge, incoming bone id); edges leave a node in stored order
    stack = [(root, ei, None) for ei in reversed(incident[root])]
    entered = {root}
    while stack:
        node, ei, parent_bone = stack.pop()
        if ei in used_edges:
            continue
        used_edges.add(ei)
        edge = g.edges[ei]
        pts = edge.points if edge.a == node else edge.points[::-1]
        far = edge.b if edge.a == node else edge.a
        last_id = _subdivide(pts, max_bone_length_mm, parent_bone, bones)
        if far not in entered:
            entered.add(far)
            for nxt in reversed(incident[far]):
                if nxt not in used_edges:
                    stack.append((far, nxt, last_id))
    return Armature(tuple(bones))


def _subdivide(
    pts: np.ndarray, max_len: float, parent: str | None, bones: list[Bone]
) -> str | None:
    seg = np.diff(pts, axis=0)
    seglen = np.linalg.norm(seg, axis=1)
    total = float(seglen.sum())
    if total <= 0:
        return parent
    nseg = max(1, int(math.ceil(total / max_len - 1e-12)))
    cum = np.concatenate([[0.0], np.cumsum(seglen)])
    targets = np.linspace(0.0, total, nseg + 1)
    joints = _points_at_arclength(pts, cum, targets)
    last = parent
    for i in range(nseg):
        bid = f"b{len(bones):03d}"
        bones.append(Bone(bid, last, joints[i], joints[i + 1]))
        last = bid
    return last


def _points_at_arclength(pts: np.ndarray, cum: np.ndarray, targets) -> np.ndarray:
    out = np.empty((len(targets), 3))
    for n, s in enumerate(targets):
        i = int(np.searchsorted(cum, s, side="right")) - 1
        i = min(max(i, 0), len(pts) - 2)
        span = cum[i + 1] - cum[i]
        t = 0.0 if span == 0 else (s - cum[i]) / span
        out[n] = pts[i] + t * (pts[i + 1] - pts[i])
    return out


# ---------------------------------------------------------------------------
# skinning weights


def _point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = b - a
    L2 = float(d @ d)
    t = np.clip((points - a) @ d / L2, 0.0, 1.0)
    closest = a + t[:, None] * d
    return np.linalg.norm(points - closest, axis=1)


def compute_weights(mesh: SurfaceMesh, a: Armature, k: int = 4) -> SurfaceMesh:
    """Attach per-vertex weights over the k nearest bones (inverse-square)."""
    if len(a) == 0:
        raise InputError("cannot weight against an empty armature")
    if k < 1:
        raise InputError("k must be >= 1")
    verts = mesh.vertices
    dists = np.stack([_point_segment_distance(verts, b.head, b.tail) for b in a.bones])
    k = min(k, len(a.bones))
    order = np.argsort(dists, axis=0, kind="stable")[:k]  # (k, nverts)
    near = np.take_along_axis(dists, order, axis=0)
    inv = 1.0 / (near + 1e-6) ** 2
    w = inv / inv.sum(axis=0)
    ids = [b.id for b in a.bones]
    weights = tuple(
        tuple((ids[order[j, v]], float(w[j, v])) for j in range(k))
        for v in range(verts.shape[0])
    )
    return mesh.with_weights(weights)


# ---------------------------------------------------------------------------
# forward kinematics


def posed_transforms(a: Armature, p: Pose) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Per-bone rigid map rest→posed, as (rotation matrix, translation)."""
    p.validate_for(a)
    out: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    Rg = quat_to_matrix(p.global_rotation)
    for b in a.bones:
        R_local = quat_to_matrix(p.local_rotation(b.id))
        t_local = b.head - R_local @ b.head  # rotate about the rest head
        if b.parent_id is None:
            Rp, tp = Rg, p.global_translation
        else:
            Rp, tp = out[b.parent_id]
        out[b.id] = (Rp @ R_local, Rp @ t_local + tp)
    return out


def posed_bones(a: Armature, p: Pose) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Posed (head, tail) of every bone."""
    maps = posed_transforms(a, p)
    result = {}
    for b in a.bones:
        R, t = maps[b.id]
        result[b.id] = (R @ b.head + t, R @ b.tail + t)
    return result


def _cumulative_rotation(a: Armature, p: Pose, bone_id: str | None) -> np.ndarray:
    """Rotation carried by the chain above (and including) bone_id."""
    q = p.global_rotation
    chain = []
    cur = bone_id
    while cur is not None:
        chain.append(cur)
        cur = a.bone(cur).parent_id
    for bid in reversed(chain):
        q = quat_multiply(q, p.local_rotation(bid))
    return q


def pose_rotate(a: Armature, p: Pose, bone_id: str, delta) -> Pose:
    """Rotate a bone by ``delta`` (world frame) about its posed head.

    Descendants inherit the motion rigidly; every other bone is untouched.
    """
    bone = a.bone(bone_id)
    p.validate_for(a)
    delta = _check_unit(delta, "delta rotation")
    q_parent = _cumulative_rotation(a, p, bone.parent_id)
    delta_local = quat_multiply(
        quat_multiply(quat_conjugate(q_parent), delta), q_parent
    )
    new_local = quat_multiply(delta_local, p.local_rotation(bone_id))
    new_local /= np.linalg.norm(new_local)
    return p.with_local(bone_id, new_local)


def rigid_align(mesh: SurfaceMesh, a: Armature, translation, rotation) -> Pose:
    """Pose carrying only a global rigid transform (root/ostium alignment)."""
    del mesh  # same-frame interface; geometry does not affect the pose
    if len(a) == 0:
        raise InputError("cannot align an empty armature")
    rotation = _check_unit(rotation, "rotation")
    translation = np.asarray(translation, dtype=np.float64).reshape(3)
    return Pose(rotation, translation, {})


def deform_mesh(mesh: SurfaceMesh, a: Armature, p: Pose) -> SurfaceMesh:
    """Linear blend skinning; an identity pose returns the mesh unchanged."""
    if mesh.weights is None:
        raise MissingWeightsError("mesh carries no bone weights")
    p.validate_for(a)
    if p.is_identity():
        return mesh
    maps = posed_transforms(a, p)
    # Bones whose posed transform is exactly the identity move nothing;
    # untouched chains compose to exact identity matrices, so == is safe.
    eye = np.eye(3)
    active = {bid for bid, (R, t) in maps.items() if t.any() or not np.array_equal(R, eye)}
    moving = np.zeros(len(mesh.vertices), dtype=bool)
    for vi, per_vertex in enumerate(mesh.weights):
        for bone_id, _ in per_vertex:
            if bone_id not in a:
                raise UnknownBoneError(f"weights reference unknown bone {bone_id!r}")
            if bone_id in active:
                moving[vi] = True
    if not active:
        return mesh
    # Vertices with no weight on a moved bone keep rest coordinates bit-for-bit
    # (blending w*v across bones would re-round them). Moved vertices accumulate
    # in armature bone order so the rounding sequence is pose-independent.
    out = mesh.vertices.copy()
    out[moving] = 0.0
    by_bone: dict[str, tuple[list[int], list[float]]] = {b.id: ([], []) for b in a.bones}
    for vi in np.flatnonzero(moving):
        for bone_id, w in mesh.weights[vi]:
            idx, ws = by_bone[bone_id]
            idx.append(int(vi))
            ws.append(w)
    for bone_id, (idx, ws) in by_bone.items():
        if not idx:
            continue
        R, t = maps[bone_id]
        moved = mesh.vertices[idx] @ R.T + t
        out[idx] += np.asarray(ws)[:, None] * moved
    return mesh.with_vertices(out)


# ---------------------------------------------------------------------------
# cutting


def vertex_keep_mask(mesh: SurfaceMesh, removed_ids: set[str]) -> np.ndarray:
    """True for vertices whose largest weight is NOT on a removed bone."""
    if mesh.weights is None:
        raise MissingWeightsError("mesh carries no bone weights")
    keep = np.ones(len(mesh.vertices), dtype=bool)
    for vi, per_vertex in enumerate(mesh.weights):
        dominant = max(per_vertex, key=lambda bw: bw[1])[0]
        if dominant in removed_ids:
            keep[vi] = False
    return keep


def cut_branch(
    a: Armature, mesh: SurfaceMesh, p: Pose, bone_id: str
) -> tuple[Armature, SurfaceMesh]:
    """Remove a bone and its subtree; drop mesh vertices it dominates."""
    bone = a.bone(bone_id)
    p.validate_for(a)
    if bone.parent_id is None:
        raise RootCutError("cannot cut the armature root")
    removed = set(a.subtree(bone_id))
    new_arm = Armature(tuple(b for b in a.bones if b.id not in removed))

    keep_vertex = vertex_keep_mask(mesh, removed)
    new_weights = []
    for vi, per_vertex in enumerate(mesh.weights):
        if not keep_vertex[vi]:
            continue
        kept = [(bid, w) for bid, w in per_vertex if bid not in removed]
        total = sum(w for _, w in kept)
        new_weights.append(tuple((bid, w / total) for bid, w in kept))

    remap = np.cumsum(keep_vertex) - 1
    tri_ok = keep_vertex[mesh.triangles].all(axis=1)
    new_tris = remap[mesh.triangles[tri_ok]].astype(np.int32)
    new_verts = mesh.vertices[keep_vertex]
    return new_arm, SurfaceMesh(new_verts, new_tris, tuple(new_weights), mesh.warnings)


# ---------------------------------------------------------------------------
# serialization


def armature_to_json(a: Armature, p: Pose | None = None) -> dict:
    if p is None:
        p = Pose.identity()
    return {
        "bones": [
            {
                "id": b.id,
                "parent": b.parent_id,
                "head": [float(c) for c in b.head],
                "tail": [float(c) for c in b.tail],
            }
            for b in a.bones
        ],
        "pose": {
            "global": {
                "q": [float(c) for c in p.global_rotation],
                "t": [float(c) for c in p.global_translation],
            },
            "local": {k: [float(c) for c in q] for k, q in p.local.items()},
        },
    }


def armature_from_json(obj: dict) -> tuple[Armature, Pose]:
    bones = tuple(
        Bone(d["id"], d.get("parent"), np.array(d["head"]), np.array(d["tail"]))
        for d in obj["bones"]
    )
    a = Armature(bones)
    pose_obj = obj.get("pose") or {}
    glob = pose_obj.get("global") or {}
    p = Pose(
        np.array(glob.get("q", [1.0, 0.0, 0.0, 0.0])),
        np.array(glob.get("t", [0.0, 0.0, 0.0])),
        {k: np.array(q) for k, q in (pose_obj.get("local") or {}).items()},
    )
    p.validate_for(a)
    return a, p
