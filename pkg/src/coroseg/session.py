"""Registration sessions: case loading, edit log, slice/contour serving.

A session's state is a pure function of the case inputs and the edit log
prefix up to the undo cursor. New edits truncate everything past the
cursor; undo moves the cursor back and replays from the initial state, so
replay and live editing share one transition function and agree
bit-exactly.
"""

from __future__ import annotations

import io
import json
import time
import uuid
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .armature import (
    Armature,
    Pose,
    armature_from_json,
    armature_to_json,
    build_armature,
    compute_weights,
    cut_branch,
    deform_mesh,
    pose_rotate,
    vertex_keep_mask,
)
from .errors import CaseError, InputError, WatertightError
from .mesh import ContourSet, SurfaceMesh, load_mesh, save_mesh, slice_contours, voxelize
from .skeleton import NodeKind, designate_root, extract_graph, skeletonize
from .volume import Volume, WindowSpec, read_volume, window_to_gray, write_volume

EDIT_KINDS = ("rotate", "rigid", "cut", "vertex_nudge", "set_pose")


@dataclass(frozen=True)
class Edit:
    kind: str
    data: dict
    timestamp: float

    def to_json(self) -> dict:
        # "ts" for the clock; a rigid edit's payload already owns plain "t"
        return {"kind": self.kind, "ts": self.timestamp, **self.data}

    @classmethod
    def from_json(cls, obj: dict) -> "Edit":
        obj = dict(obj)
        kind = obj.pop("kind", None)
        if kind not in EDIT_KINDS:
            raise InputError(f"unknown edit kind {kind!r}")
        t = float(obj.pop("ts", 0.0))
        return cls(kind, obj, t)


@dataclass(frozen=True)
class _State:
    armature: Armature
    mesh: SurfaceMesh  # rest space, weighted
    pose: Pose
    nudges: np.ndarray  # (nverts, 3) posed-space offsets


def _apply_edit_to_state(state: _State, edit: Edit) -> _State:
    kind, d = edit.kind, edit.data
    if kind == "rotate":
        pose = pose_rotate(state.armature, state.pose, d["bone"], np.asarray(d["q"], float))
        return _State(state.armature, state.mesh, pose, state.nudges)
    if kind == "rigid":
        pose = state.pose.with_global(np.asarray(d["q"], float), np.asarray(d["t"], float))
        return _State(state.armature, state.mesh, pose, state.nudges)
    if kind == "set_pose":
        p = d["pose"]
        glob = p.get("global") or {}
        pose = Pose(
            np.asarray(glob.get("q", [1.0, 0.0, 0.0, 0.0]), float),
            np.asarray(glob.get("t", [0.0, 0.0, 0.0]), float),
            {k: np.asarray(q, float) for k, q in (p.get("local") or {}).items()},
        )
        pose.validate_for(state.armature)
        return _State(state.armature, state.mesh, pose, state.nudges)
    if kind == "cut":
        removed = set(state.armature.subtree(d["bone"]))
        keep = vertex_keep_mask(state.mesh, removed)
        arm, mesh = cut_branch(state.armature, state.mesh, state.pose, d["bone"])
        return _State(arm, mesh, state.pose.restricted_to(arm), state.nudges[keep])
    if kind == "vertex_nudge":
        vi = int(d["vertex"])
        if not 0 <= vi < len(state.mesh.vertices):
            raise InputError(f"vertex index {vi} out of range")
        nudges = state.nudges.copy()
        nudges[vi] = nudges[vi] + np.asarray(d["delta"], float)
        return _State(state.armature, state.mesh, state.pose, nudges)
    raise InputError(f"unknown edit kind {kind!r}")


class Session:
    def __init__(
        self,
        case_id: str,
        volume: Volume,
        mesh: SurfaceMesh,
        armature: Armature,
        pose: Pose,
        case_dir: Path | None = None,
    ):
        self.session_id = uuid.uuid4().hex
        self.case_id = case_id
        self.volume = volume
        self.case_dir = case_dir
        self._initial = _State(armature, mesh, pose, np.zeros_like(mesh.vertices))
        self.log: list[Edit] = []
        self.cursor = 0
        self._state = self._initial
        self._deformed: SurfaceMesh | None = None

    # -- current state ------------------------------------------------------

    @property
    def armature(self) -> Armature:
        return self._state.armature

    @property
    def pose(self) -> Pose:
        return self._state.pose

    @property
    def rest_mesh(self) -> SurfaceMesh:
        return self._state.mesh

    def deformed_mesh(self) -> SurfaceMesh:
        if self._deformed is None:
            out = deform_mesh(self._state.mesh, self._state.armature, self._state.pose)
            if self._state.nudges.any():
                out = out.with_vertices(out.vertices + self._state.nudges)
            self._deformed = out
        return self._deformed

    # -- edits --------------------------------------------------------------

    def apply(self, edit: Edit) -> None:
        new_state = _apply_edit_to_state(self._state, edit)  # validate before commit
        del self.log[self.cursor :]
        self.log.append(edit)
        self.cursor = len(self.log)
        self._state = new_state
        self._deformed = None

    def undo(self) -> None:
        if self.cursor > 0:
            self.cursor -= 1
            self._replay()

    def redo(self) -> None:
        if self.cursor < len(self.log):
            self.cursor += 1
            self._replay()

    def _replay(self) -> None:
        state = self._initial
        for edit in self.log[: self.cursor]:
            state = _apply_edit_to_state(state, edit)
        self._state = state
        self._deformed = None

    # -- slices -------------------------------------------------------------

    @property
    def slice_count(self) -> int:
        return self.volume.dims[2]

    def _check_slice(self, k: int) -> None:
        if not 0 <= k < self.slice_count:
            raise InputError(f"slice {k} outside [0, {self.slice_count})")

    def slice_z_mm(self, k: int) -> float:
        self._check_slice(k)
        return float(self.volume.origin[2] + k * self.volume.spacing[2])

    def contours_at(self, k: int) -> ContourSet:
        z = self.slice_z_mm(k)
        cs = slice_contours(self.deformed_mesh(), z)
        return ContourSet(cs.z_mm, cs.polygons, z_index=k)

    def slice_png(self, k: int, window: WindowSpec) -> bytes:
        from PIL import Image

        self._check_slice(k)
        gray = window_to_gray(self.volume, window)[:, :, k]
        img = Image.fromarray(np.ascontiguousarray(gray.T), mode="L")  # rows = y axis
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return buf.getvalue()

    # -- persistence --------------------------------------------------------

    def save_gt(self, out_dir: str | Path) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        mesh = self.deformed_mesh()
        files: dict[str, str | None] = {}
        save_mesh(mesh, out / "mesh.obj")
        files["mesh"] = str(out / "mesh.obj")

        vox_error = None
        try:
            mask = voxelize(mesh, self.volume)
            write_volume(mask, out / "mask.nii.gz")
            files["mask"] = str(out / "mask.nii.gz")
        except WatertightError as exc:
            vox_error = str(exc)
            files["mask"] = None

        blob = armature_to_json(self._state.armature, self._state.pose)
        (out / "pose.json").write_text(json.dumps(blob))
        files["pose"] = str(out / "pose.json")

        with (out / "edits.jsonl").open("w") as fh:
            for edit in self.log[: self.cursor]:
                fh.write(json.dumps(edit.to_json()) + "\n")
        files["log"] = str(out / "edits.jsonl")
        return {"files": files, "voxelization_error": vox_error}


# ---------------------------------------------------------------------------
# case loading


def _auto_armature(volume: Volume, mesh: SurfaceMesh) -> Armature:
    mask = voxelize(mesh, volume)
    skel = skeletonize(mask)
    graph = extract_graph(skel)
    root = next(
        (i for i, n in enumerate(graph.nodes) if n.kind is NodeKind.ENDPOINT), None
    )
    if root is None:
        raise CaseError("centerline graph has no endpoint to use as root")
    return build_armature(designate_root(graph, root))


def open_session(case_dir: str | Path) -> Session:
    case_dir = Path(case_dir)
    scan = case_dir / "scan.nii.gz"
    tree = case_dir / "tree.obj"
    if not scan.is_file():
        raise CaseError(f"missing {scan}")
    if not tree.is_file():
        raise CaseError(f"missing {tree}")
    volume = read_volume(scan, label=False)
    if not np.allclose(volume.direction, np.eye(3), atol=1e-6):
        raise CaseError("scan must be axis-aligned for axial slicing")
    mesh = load_mesh(tree)

    arm_path = case_dir / "armature.json"
    if arm_path.is_file():
        armature, pose = armature_from_json(json.loads(arm_path.read_text()))
    else:
        armature, pose = _auto_armature(volume, mesh), Pose.identity()
    mesh = compute_weights(mesh, armature)
    return Session(case_dir.name, volume, mesh, armature, pose, case_dir=case_dir)


def make_edit(kind: str, timestamp: float | None = None, **data) -> Edit:
    if kind not in EDIT_KINDS:
        raise InputError(f"unknown edit kind {kind!r}")
    return Edit(kind, data, time.time() if timestamp is None else timestamp)


def load_edit_log(path: str | Path) -> list[Edit]:
    edits = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            edits.append(Edit.from_json(json.loads(line)))
    return edits
