"""End-to-end acceptance checks, one per shipped guarantee.

Each test prints a single ``ACCEPTANCE <name>: PASS|FAIL`` line (bypassing
capture) so a plain pytest run shows the verdict for every guarantee, then
fails with the collected problem list if anything is off.
"""

import json
import math
import os
import time
import traceback

import numpy as np
import pytest

from coroseg.armature import (
    Pose,
    build_armature,
    deform_mesh,
    pose_rotate,
    posed_bones,
    quat_from_axis_angle,
)
from coroseg.components import filter_outside, filter_small, postprocess
from coroseg.mesh import voxelize
from coroseg.metrics import evaluate_case, centerline_metrics, overlap_metrics
from coroseg.session import Edit, make_edit, open_session
from coroseg.skeleton import (
    CenterlineGraph,
    GraphEdge,
    GraphNode,
    NodeKind,
    skeletonize,
)
from coroseg.stats import Method, mann_whitney_u, wilcoxon_signed_rank
from coroseg.volume import read_volume

from helpers import (
    build_case_dir,
    cube_mesh,
    flood_fill_components,
    make_label,
    mesh_volume,
    mwu_oracle,
    random_tube_phantom,
    tube_mask,
    uv_sphere,
)

DATA_ENV = "COROSEG_EVAL_DATA"


@pytest.fixture
def announce(capsys):
    def _report(name: str, ok: bool) -> None:
        with capsys.disabled():
            print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}", flush=True)

    return _report


def _coord_set(arr):
    return {tuple(ijk) for ijk in np.argwhere(np.asarray(arr) != 0)}


def _oracle_sextet(pred_arr, gt_arr, skel_p_arr, skel_g_arr):
    """Recompute all six metrics from explicit voxel sets.

    Division order mirrors the library so agreement can be demanded
    bit-for-bit, but the counting itself is plain set algebra.
    """
    p, g = _coord_set(pred_arr), _coord_set(gt_arr)
    sp, sg = _coord_set(skel_p_arr), _coord_set(skel_g_arr)
    nan = float("nan")
    inter = len(p & g)
    dice = (2 * inter) / (len(p) + len(g)) if (len(p) + len(g)) else nan
    recall = inter / len(g) if g else nan
    precision = inter / len(p) if p else nan
    if not sp or not sg:
        return dice, recall, precision, nan, nan, nan
    clp = len(sp & g) / len(sp)
    clr = len(sg & p) / len(sg)
    cld = 2 * clp * clr / (clp + clr) if clp + clr > 0 else nan
    return dice, recall, precision, cld, clr, clp


def _same_value(a: float, b: float) -> bool:
    return a == b or (math.isnan(a) and math.isnan(b))


def test_metric_oracle_equivalence(announce):
    problems: list[str] = []
    try:
        rng = np.random.default_rng(2024)
        t0 = time.perf_counter()
        for i in range(50):
            dims = tuple(int(n) for n in rng.integers(24, 65, size=3))
            gt_arr = random_tube_phantom(rng, dims, y_shape=bool(i % 2))
            if i % 3 == 0:
                pred_arr = gt_arr.copy()
            else:
                pred_arr = random_tube_phantom(rng, dims, y_shape=bool(i % 5 == 0))
            pred = make_label(pred_arr)
            gt = make_label(gt_arr)
            skel_p = skeletonize(pred)
            skel_g = skeletonize(gt)
            got = overlap_metrics(pred, gt) + centerline_metrics(
                pred, gt, skeletons=(skel_p, skel_g)
            )
            # library tuple order is (dice, recall, precision, cld, clr, clp)
            lib = (got[0], got[1], got[2], got[3], got[4], got[5])
            want = _oracle_sextet(pred_arr, gt_arr, skel_p.data, skel_g.data)
            for name, a, b in zip(
                ("dice", "recall", "precision", "cl_dice", "cl_recall", "cl_precision"),
                lib,
                want,
            ):
                if not _same_value(a, b):
                    problems.append(f"phantom {i} dims {dims}: {name} {a!r} != oracle {b!r}")
        elapsed = time.perf_counter() - t0
        if elapsed >= 60.0:
            problems.append(f"50-phantom comparison took {elapsed:.1f}s (budget 60s)")
    except Exception:
        problems.append(traceback.format_exc())
    announce("metric-oracle-equivalence", not problems)
    assert not problems, "\n".join(problems)


def test_postprocessing_filters(announce):
    problems: list[str] = []
    try:
        dims = (64, 64, 48)
        spacing = (0.35, 0.35, 0.35)
        vox = 0.35**3  # 0.042875 mm^3

        main = tube_mask(dims, (32, 32, 4), (32, 32, 44), 3.5)
        satellite = np.zeros(dims, dtype=np.uint8)
        satellite[8:18, 8:18, 30:40] = 1  # exactly 1000 voxels
        outside = np.zeros(dims, dtype=np.uint8)
        outside[52:64, 40:52, 10:22] = 1  # 1728 voxels, beyond the region box
        peri = np.zeros(dims, dtype=np.uint8)
        peri[4:50, 4:56, :] = 1

        if int(satellite.sum()) != 1000:
            problems.append(f"satellite is {int(satellite.sum())} voxels, wanted 1000")
        if satellite.sum() * vox >= 50.0:
            problems.append("satellite not below the 50 mm^3 cutoff")
        if outside.sum() * vox <= 50.0:
            problems.append("outside component must survive the volume cutoff")
        if main.sum() * vox <= 50.0:
            problems.append("main vessel must survive the volume cutoff")
        if (satellite & (peri == 0)).any():
            problems.append("satellite must sit inside the region box")
        if (outside & peri).any():
            problems.append("outside component must not touch the region box")
        if ((main | satellite) & outside).any() or (main & satellite).any():
            problems.append("phantom components overlap")

        pred = make_label(main | satellite | outside, spacing=spacing)
        gt = make_label(main, spacing=spacing)
        peri_vol = make_label(peri, spacing=spacing)

        by_volume = filter_small(pred, 50.0)
        if not np.array_equal(by_volume.data != 0, (main | outside) != 0):
            problems.append("min-volume filter did not remove exactly the small satellite")
        by_region = filter_outside(pred, peri_vol)
        if not np.array_equal(by_region.data != 0, (main | satellite) != 0):
            problems.append("region filter did not remove exactly the outside component")
        both = postprocess(pred, pericardium=peri_vol, min_volume_mm3=50.0)
        if not np.array_equal(both.data != 0, main != 0):
            problems.append("combined filters did not reduce the mask to the main vessel")

        raw = evaluate_case(pred, gt)
        cleaned = evaluate_case(pred, gt, pericardium=peri_vol, vol50=True, use_pericardium=True)
        if not cleaned.precision > raw.precision:
            problems.append(
                f"precision must rise strictly: {raw.precision} -> {cleaned.precision}"
            )
        if cleaned.recall != raw.recall:
            problems.append(f"recall must be unchanged: {raw.recall} -> {cleaned.recall}")
    except Exception:
        problems.append(traceback.format_exc())
    announce("postprocessing-filters", not problems)
    assert not problems, "\n".join(problems)


def _thinness_ok(mask) -> bool:
    m = np.asarray(mask) != 0
    pad = np.pad(m, 1)
    for i, j, k in np.argwhere(m):
        if pad[i : i + 3, j : j + 3, k : k + 3].all():
            return False
    return True


def test_skeleton_properties(announce):
    problems: list[str] = []
    try:
        rng = np.random.default_rng(99)
        for i in range(100):
            arr = random_tube_phantom(rng, (32, 32, 32), y_shape=bool(i % 2))
            vol = make_label(arr)
            skel = skeletonize(vol).data
            if np.any((skel != 0) & (arr == 0)):
                problems.append(f"phantom {i}: skeleton leaves the mask")
            if not _thinness_ok(skel):
                problems.append(f"phantom {i}: skeleton has a solid 3x3x3 interior voxel")
            _, n_mask = flood_fill_components(arr)
            _, n_skel = flood_fill_components(skel)
            if n_mask != n_skel:
                problems.append(
                    f"phantom {i}: component count changed {n_mask} -> {n_skel}"
                )
    except Exception:
        problems.append(traceback.format_exc())
    announce("skeleton-properties", not problems)
    assert not problems, "\n".join(problems)


def _u_tail_two_sided(n1: int, n2: int, u_obs: float) -> float:
    """Exact two-sided p for tie-free samples via the classic DP recurrence.

    count[i][j][u] = arrangements of i 'first-group' and j 'second-group'
    labels with exactly u first-over-second wins.
    """
    max_u = n1 * n2
    prev = [[1] + [0] * max_u for _ in range(n2 + 1)]  # i = 0 row
    for i in range(1, n1 + 1):
        cur = [[0] * (max_u + 1) for _ in range(n2 + 1)]
        cur[0][0] = 1
        for j in range(1, n2 + 1):
            for u in range(max_u + 1):
                c = cur[j - 1][u]  # last label from the second group
                if u >= j:
                    c += prev[j][u - j]  # last label from the first group
                cur[j][u] = c
        prev = cur
    counts = prev[n2]
    total = sum(counts)
    tail = sum(c for u, c in enumerate(counts) if u <= u_obs + 1e-9)
    return min(1.0, 2.0 * tail / total)


def test_rank_test_pvalues(announce):
    problems: list[str] = []
    try:
        rng = np.random.default_rng(5)
        # exact path against full enumeration, every split up to n1+n2 = 10,
        # with continuous data and heavily tied integer data
        for n1 in range(1, 10):
            for n2 in range(1, 11 - n1):
                for tied in (False, True):
                    if tied:
                        a = rng.integers(0, 3, size=n1).astype(float).tolist()
                        b = rng.integers(0, 3, size=n2).astype(float).tolist()
                        if len(set(a + b)) == 1:
                            b[0] += 1.0
                    else:
                        a = rng.normal(size=n1).tolist()
                        b = rng.normal(size=n2).tolist()
                    res = mann_whitney_u(a, b)
                    if res.method is not Method.EXACT:
                        problems.append(f"n1={n1} n2={n2}: expected the exact method")
                        continue
                    _, p_want = mwu_oracle(a, b)
                    if abs(res.p_value - p_want) > 1e-12:
                        problems.append(
                            f"n1={n1} n2={n2} tied={tied}: p {res.p_value} vs {p_want}"
                        )

        # large-sample path: the approximation must land within a factor of
        # 1.5 of the tie-free DP tail on the -log10 scale
        a = [float(v) for v in range(1, 11)]
        b = [float(v) for v in range(11, 21)]
        res = mann_whitney_u(a, b)
        if res.method is not Method.NORMAL_APPROX:
            problems.append("20-sample comparison should use the normal approximation")
        p_exact = _u_tail_two_sided(10, 10, res.statistic)
        la, le = -math.log10(res.p_value), -math.log10(p_exact)
        if not (max(la, le) / min(la, le) <= 1.5):
            problems.append(
                f"approximate p {res.p_value} vs exact {p_exact}: "
                f"-log10 ratio {max(la, le) / min(la, le):.3f} exceeds 1.5"
            )

        res = wilcoxon_signed_rank([1.0, 2.0, 3.0])
        if res.p_value != 0.25:
            problems.append(f"signed-rank p for [1,2,3] is {res.p_value}, wanted 0.25")
    except Exception:
        problems.append(traceback.format_exc())
    announce("rank-test-pvalues", not problems)
    assert not problems, "\n".join(problems)


def _random_tree_graph(rng) -> CenterlineGraph:
    """Random anatomically-shaped tree: each new joint hangs off an earlier one."""
    n_nodes = int(rng.integers(3, 8))
    pos = [rng.uniform(20.0, 40.0, size=3)]
    parent: list[int | None] = [None]
    for i in range(1, n_nodes):
        # the root stays a tip: everything past the first joint hangs deeper
        j = 0 if i == 1 else int(rng.integers(1, i))
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        pos.append(pos[j] + d * float(rng.uniform(4.0, 9.0)))
        parent.append(j)
    n_children = [0] * n_nodes
    for i in range(1, n_nodes):
        n_children[parent[i]] += 1
    nodes = []
    for i in range(n_nodes):
        if i == 0:
            kind = NodeKind.ROOT
        elif n_children[i] == 0:
            kind = NodeKind.ENDPOINT
        else:
            kind = NodeKind.BRANCH
        nodes.append(GraphNode(pos[i].tolist(), kind))
    edges = tuple(
        GraphEdge(parent[i], i, [pos[parent[i]].tolist(), pos[i].tolist()])
        for i in range(1, n_nodes)
    )
    return CenterlineGraph(tuple(nodes), edges)


def _random_pose(a, rng, n_rotations: int) -> Pose:
    p = Pose.identity()
    for _ in range(n_rotations):
        bone = a.bones[int(rng.integers(len(a.bones)))].id
        q = quat_from_axis_angle(rng.normal(size=3), float(rng.uniform(-np.pi, np.pi)))
        p = pose_rotate(a, p, bone, q)
    if rng.random() < 0.5:
        qg = quat_from_axis_angle(rng.normal(size=3), float(rng.uniform(-np.pi, np.pi)))
        p = p.with_global(qg, rng.normal(0.0, 5.0, size=3))
    return p


def test_armature_and_editing(announce, tmp_path):
    problems: list[str] = []
    try:
        rng = np.random.default_rng(17)

        # 1) rigid bones: 1000 random poses over 20 random trees
        for _ in range(20):
            a = build_armature(_random_tree_graph(rng), 5.0)
            rest = {b.id: b.rest_length for b in a.bones}
            for _ in range(50):
                p = _random_pose(a, rng, int(rng.integers(1, 6)))
                for bid, (head, tail) in posed_bones(a, p).items():
                    err = abs(float(np.linalg.norm(tail - head)) - rest[bid])
                    if err >= 1e-9:
                        problems.append(f"bone {bid} length drifted by {err:.2e}")

        # 2) identity pose leaves a skinned mesh byte-identical
        case = build_case_dir(tmp_path / "case")
        sess = open_session(case)
        out = deform_mesh(sess.rest_mesh, sess.armature, Pose.identity())
        if out.vertices.tobytes() != sess.rest_mesh.vertices.tobytes():
            problems.append("identity pose changed mesh bytes")

        # 3) leaf rotations never move the rest of the tree (100 random trees,
        #    checked from an identity and from a perturbed baseline)
        for i in range(100):
            a = build_armature(_random_tree_graph(rng), 5.0)
            leaves = [b.id for b in a.bones if not a.children(b.id)]
            leaf = leaves[int(rng.integers(len(leaves)))]
            inside = set(a.subtree(leaf))
            base = Pose.identity() if i % 2 == 0 else _random_pose(a, rng, 2)
            before = posed_bones(a, base)
            bone_dir = a.bone(leaf).tail - a.bone(leaf).head
            axis = np.cross(bone_dir, rng.normal(size=3))
            while np.linalg.norm(axis) < 1e-6:
                axis = np.cross(bone_dir, rng.normal(size=3))
            turned = pose_rotate(
                a, base, leaf, quat_from_axis_angle(axis, float(rng.uniform(0.3, 1.0)))
            )
            after = posed_bones(a, turned)
            for bid in before:
                if bid in inside:
                    continue
                if not (
                    np.array_equal(before[bid][0], after[bid][0])
                    and np.array_equal(before[bid][1], after[bid][1])
                ):
                    problems.append(f"tree {i}: leaf turn moved bone {bid}")
            if np.array_equal(before[leaf][1], after[leaf][1]):
                problems.append(f"tree {i}: leaf turn had no effect")

        # 4) a 100-edit session replays bit-exactly from its serialized log
        live = open_session(case)
        for step in range(100):
            if step == 50:
                live.apply(make_edit("cut", bone=live.armature.bones[-1].id))
                continue
            roll = rng.random()
            if roll < 0.55:
                bone = str(rng.choice([b.id for b in live.armature.bones]))
                q = quat_from_axis_angle(rng.normal(size=3), float(rng.uniform(-0.2, 0.2)))
                live.apply(make_edit("rotate", bone=bone, q=q.tolist()))
            elif roll < 0.8:
                vi = int(rng.integers(len(live.rest_mesh.vertices)))
                live.apply(
                    make_edit(
                        "vertex_nudge", vertex=vi, delta=rng.normal(0, 0.05, 3).tolist()
                    )
                )
            else:
                q = quat_from_axis_angle(rng.normal(size=3), float(rng.uniform(-0.05, 0.05)))
                live.apply(make_edit("rigid", q=q.tolist(), t=rng.normal(0, 0.5, 3).tolist()))
        lines = [json.dumps(e.to_json()) for e in live.log]
        if len(lines) != 100:
            problems.append(f"edit log has {len(lines)} entries, wanted 100")
        fresh = open_session(case)
        for line in lines:
            fresh.apply(Edit.from_json(json.loads(line)))
        if fresh.deformed_mesh().vertices.tobytes() != live.deformed_mesh().vertices.tobytes():
            problems.append("replayed mesh differs from the live session's")
    except Exception:
        problems.append(traceback.format_exc())
    announce("armature-and-editing", not problems)
    assert not problems, "\n".join(problems)


def test_mesh_voxelization(announce):
    problems: list[str] = []
    try:
        cube = cube_mesh((0.5, 0.5, 0.5), (10.5, 10.5, 10.5))
        grid = make_label(np.zeros((12, 12, 12), dtype=np.uint8))
        n = int(np.count_nonzero(voxelize(cube, grid).data))
        if n != 1000:
            problems.append(f"10 mm cube filled {n} voxels, wanted exactly 1000")

        sphere = uv_sphere((6.05, 6.07, 6.11), 5.0)
        true_vol = mesh_volume(sphere)
        errs = {}
        for spacing, dim in ((0.4, 31), (0.2, 61)):
            g = make_label(
                np.zeros((dim, dim, dim), dtype=np.uint8), spacing=(spacing,) * 3
            )
            filled = voxelize(sphere, g)
            est = float(np.count_nonzero(filled.data)) * filled.voxel_volume_mm3
            errs[spacing] = abs(est - true_vol) / true_vol
        if not errs[0.2] < 0.02:
            problems.append(f"sphere volume error {errs[0.2]:.4f} at 0.2 mm (limit 0.02)")
        if not errs[0.2] < errs[0.4]:
            problems.append(
                f"halving the spacing must tighten the estimate: "
                f"{errs[0.4]:.4f} -> {errs[0.2]:.4f}"
            )
    except Exception:
        problems.append(traceback.format_exc())
    announce("mesh-voxelization", not problems)
    assert not problems, "\n".join(problems)


@pytest.mark.skipif(
    DATA_ENV not in os.environ,
    reason=f"set {DATA_ENV} to a directory of cases (pred/gt/pericardium NIfTIs) "
    "to run the cohort check",
)
def test_cohort_evaluation(announce):
    problems: list[str] = []
    try:
        root = os.environ[DATA_ENV]
        case_dirs = sorted(
            d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d))
        )
        if not case_dirs:
            problems.append(f"no case directories under {root}")
        cl_precisions = []
        for cid in case_dirs:
            base = os.path.join(root, cid)
            pred = read_volume(os.path.join(base, "pred.nii.gz"), label=True)
            gt = read_volume(os.path.join(base, "gt.nii.gz"), label=True)
            peri = read_volume(os.path.join(base, "pericardium.nii.gz"), label=True)
            m = evaluate_case(pred, gt, pericardium=peri, vol50=True, use_pericardium=True)
            if not 0.45 <= m.dice <= 0.85:
                problems.append(f"{cid}: dice {m.dice:.3f} outside [0.45, 0.85]")
            if not 0.45 <= m.cl_dice <= 0.85:
                problems.append(f"{cid}: centerline dice {m.cl_dice:.3f} outside [0.45, 0.85]")
            cl_precisions.append(m.cl_precision)
        if cl_precisions and not float(np.median(cl_precisions)) >= 0.8:
            problems.append(
                f"median centerline precision {float(np.median(cl_precisions)):.3f} < 0.8"
            )
    except Exception:
        problems.append(traceback.format_exc())
    announce("cohort-evaluation", not problems)
    assert not problems, "\n".join(problems)
