"""Mask thinning and centerline graph extraction.

``skeletonize`` reduces a binary vessel mask to a unit-width voxel skeleton
without changing its topology; ``extract_graph`` turns that skeleton into a
node/edge graph with polylines in physical mm; ``prune_spurs`` removes short
leaf twigs (thinning artifacts) and re-merges pass-through chains.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import InputError, ThinnessError
from .volume import Kind, Volume


class NodeKind(enum.Enum):
    ENDPOINT = "endpoint"
    BRANCH = "branch"
    ROOT = "root"


@dataclass(frozen=True)
class GraphNode:
    position: np.ndarray  # (3,) mm
    kind: NodeKind

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        pos.flags.writeable = False
        object.__setattr__(self, "position", pos)


@dataclass(frozen=True)
class GraphEdge:
    a: int
    b: int
    points: np.ndarray  # (n, 3) mm, points[0] at node a, points[-1] at node b

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def length_mm(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())


@dataclass(frozen=True)
class CenterlineGraph:
    nodes: tuple[GraphNode, ...]
    edges: tuple[GraphEdge, ...]

    def degree(self, i: int) -> int:
        d = 0
        for e in self.edges:
            if e.a == i:
                d += 1
            if e.b == i:
                d += 1
        return d

    def total_length_mm(self) -> float:
        return float(sum(e.length_mm for e in self.edges))

    def to_json(self) -> dict:
        return {
            "nodes": [
                {"pos": [float(c) for c in n.position], "kind": n.kind.value}
                for n in self.nodes
            ],
            "edges": [
                {"a": e.a, "b": e.b, "points": [[float(c) for c in p] for p in e.points]}
                for e in self.edges
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CenterlineGraph":
        nodes = tuple(
            GraphNode(np.array(n["pos"], dtype=np.float64), NodeKind(n["kind"]))
            for n in obj["nodes"]
        )
        edges = tuple(
            GraphEdge(int(e["a"]), int(e["b"]), np.array(e["points"], dtype=np.float64))
            for e in obj["edges"]
        )
        return cls(nodes, edges)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: str | Path) -> "CenterlineGraph":
        return cls.from_json(json.loads(Path(path).read_text()))


def skeletonize(mask: Volume) -> Volume:
    """Topology-preserving thinning; output voxels are a subset of the input."""
    if mask.kind is not Kind.LABEL:
        raise InputError("expected a label volume")
    if mask.data.size and int(mask.data.max(initial=0)) > 1:
        raise InputError("mask must be binary (0/1)")
    return mask.with_data(_kernels.thin(mask.data))


_NB_OFFSETS = [
    (dx, dy, dz)
    for dx in (-1, 0, 1)
    for dy in (-1, 0, 1)
    for dz in (-1, 0, 1)
    if (dx, dy, dz) != (0, 0, 0)
]


def extract_graph(skeleton: Volume) -> CenterlineGraph:
    """Build the node/edge graph of a thin voxel skeleton.

    Voxels with one 26-neighbor become endpoints, with three or more become
    branch nodes; maximal chains of pass-through voxels become edges. A
    voxel with no neighbors is a node of its own (endpoint by convention);
    a pure cycle is anchored at its scan-first voxel.
    """
    if skeleton.kind is not Kind.LABEL:
        raise InputError("expected a label volume")
    data = skeleton.data != 0
    nx, ny, nz = data.shape
    pad = np.zeros((nx + 2, ny + 2, nz + 2), dtype=bool)
    pad[1:-1, 1:-1, 1:-1] = data

    for i, j, k in np.argwhere(data):
        if pad[i : i + 3, j : j + 3, k : k + 3].all():
            raise ThinnessError(f"voxel {(i, j, k)} has a fully-set 3x3x3 neighborhood")

    voxels = [tuple(v) for v in np.argwhere(data)]
    nb_count: dict[tuple, int] = {}
    neighbors: dict[tuple, list[tuple]] = {}
    for v in voxels:
        ns = []
        for dx, dy, dz in _NB_OFFSETS:
            if pad[v[0] + 1 + dx, v[1] + 1 + dy, v[2] + 1 + dz]:
                ns.append((v[0] + dx, v[1] + dy, v[2] + dz))
        neighbors[v] = ns
        nb_count[v] = len(ns)

    node_index: dict[tuple, int] = {}
    nodes: list[GraphNode] = []

    def _add_node(v: tuple, kind: NodeKind) -> int:
        idx = node_index.get(v)
        if idx is None:
            idx = len(nodes)
            node_index[v] = idx
            nodes.append(GraphNode(skeleton.index_to_mm(np.array(v, dtype=np.float64)), kind))
        return idx

    for v in voxels:  # scan order
        if nb_count[v] != 2:
            _add_node(v, NodeKind.ENDPOINT if nb_count[v] <= 1 else NodeKind.BRANCH)

    edges: list[GraphEdge] = []
    used: set[frozenset] = set()

    def _walk(start: tuple, first: tuple) -> None:
        step = frozenset((start, first))
        if step in used:
            return
        used.add(step)
        path = [start, first]
        prev, cur = start, first
        while cur not in node_index:
            nxt = [n for n in neighbors[cur] if n != prev]
            if len(nxt) != 1:  # defensive: should not happen on thin input
                break
            used.add(frozenset((cur, nxt[0])))
            prev, cur = cur, nxt[0]
            path.append(cur)
        a = node_index[path[0]]
        b = node_index[path[-1]]
        pts = skeleton.index_to_mm(np.array(path, dtype=np.float64))
        edges.append(GraphEdge(a, b, pts))

    for v in voxels:
        if v in node_index:
            for n in neighbors[v]:
                _walk(v, n)

    # anything left untouched is a pure cycle of pass-through voxels
    for v in voxels:
        if v not in node_index and not any(frozenset((v, n)) in used for n in neighbors[v]):
            _add_node(v, NodeKind.BRANCH)
            _walk(v, neighbors[v][0])

    return CenterlineGraph(tuple(nodes), tuple(edges))


def designate_root(g: CenterlineGraph, node_index: int) -> CenterlineGraph:
    """Mark one node as the tree root (demoting any previous root)."""
    if not 0 <= node_index < len(g.nodes):
        raise InputError(f"node index {node_index} out of range")
    nodes = []
    for i, n in enumerate(g.nodes):
        if i == node_index:
            nodes.append(GraphNode(n.position, NodeKind.ROOT))
        elif n.kind is NodeKind.ROOT:
            deg = g.degree(i)
            kind = NodeKind.BRANCH if deg >= 3 else NodeKind.ENDPOINT
            nodes.append(GraphNode(n.position, kind))
        else:
            nodes.append(n)
    return CenterlineGraph(tuple(nodes), g.edges)


def prune_spurs(g: CenterlineGraph, min_length_mm: float) -> CenterlineGraph:
    """Drop leaf edges shorter than the threshold; merge pass-through nodes.

    A leaf edge has exactly one endpoint-kind node; an isolated
    endpoint-to-endpoint path is left alone. Runs to a fixpoint so a second
    call at the same threshold is a no-op.
    """
    if min_length_mm < 0:
        raise InputError(f"min_length_mm must be >= 0, got {min_length_mm}")
    nodes = list(g.nodes)
    edges = list(g.edges)
    alive = [True] * len(nodes)

    def _degree(i: int) -> int:
        return sum((e.a == i) + (e.b == i) for e in edges)

    while True:
        # remove one shortest eligible leaf at a time: deterministic cascade
        best = None
        for ei, e in enumerate(edges):
            if e.a == e.b:
                continue
            a_leaf = _degree(e.a) == 1 and nodes[e.a].kind is NodeKind.ENDPOINT
            b_leaf = _degree(e.b) == 1 and nodes[e.b].kind is NodeKind.ENDPOINT
            if a_leaf == b_leaf:  # both ends leaves (isolated path) or neither
                continue
            if e.length_mm < min_length_mm:
                if best is None or e.length_mm < edges[best].length_mm:
                    best = ei
        if best is None:
            break
        e = edges.pop(best)
        leaf = e.a if _degree(e.a) == 0 else e.b
        if _degree(leaf) == 0:
            alive[leaf] = False
        _refresh_kinds(nodes, edges)
        _merge_chains(nodes, edges, alive)

    return _compact(nodes, edges, alive)


def _refresh_kinds(nodes: list[GraphNode], edges: list[GraphEdge]) -> None:
    deg = [0] * len(nodes)
    for e in edges:
        deg[e.a] += 1
        deg[e.b] += 1
    for i, n in enumerate(nodes):
        if n.kind is NodeKind.ROOT:
            continue
        want = NodeKind.ENDPOINT if deg[i] <= 1 else (NodeKind.BRANCH if deg[i] >= 3 else n.kind)
        if want is not n.kind:
            nodes[i] = GraphNode(n.position, want)


def _merge_chains(nodes: list[GraphNode], edges: list[GraphEdge], alive: list[bool]) -> None:
    """Splice out degree-2 non-root nodes by joining their two edges."""
    while True:
        deg = [0] * len(nodes)
        for e in edges:
            deg[e.a] += 1
            deg[e.b] += 1
        target = None
        for i, n in enumerate(nodes):
            if alive[i] and deg[i] == 2 and n.kind is not NodeKind.ROOT:
                inc = [e for e in edges if e.a == i or e.b == i]
                if len(inc) == 2:  # not a self-loop
                    target = (i, inc)
                    break
        if target is None:
            return
        i, (e1, e2) = target
        p1 = e1.points if e1.b == i else e1.points[::-1]
        o1 = e1.a if e1.b == i else e1.b
        p2 = e2.points if e2.a == i else e2.points[::-1]
        o2 = e2.b if e2.a == i else e2.a
        merged = GraphEdge(o1, o2, np.vstack([p1, p2[1:]]))
        edges.remove(e1)
        edges.remove(e2)
        edges.append(merged)
        alive[i] = False


def _compact(
    nodes: list[GraphNode], edges: list[GraphEdge], alive: list[bool]
) -> CenterlineGraph:
    """Renumber, keeping live nodes (including edgeless isolated ones)."""
    keep = [i for i, a in enumerate(alive) if a]
    remap = {old: new for new, old in enumerate(keep)}
    new_nodes = tuple(nodes[i] for i in keep)
    new_edges = tuple(GraphEdge(remap[e.a], remap[e.b], e.points) for e in edges)
    return CenterlineGraph(new_nodes, new_edges)
