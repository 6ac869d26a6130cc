"""HTTP front end for registration sessions.

One process serves a directory of cases; each session holds its own lock,
so edits within a session are serialized while separate sessions proceed
independently. All geometry truth lives server-side — clients render what
these endpoints return.
"""

from __future__ import annotations

import threading
from pathlib import Path

import numpy as np

from .errors import CaseError, CorosegError, InputError
from .session import Edit, Session, open_session
from .volume import WindowSpec

DEFAULT_WINDOW = (-120.0, 200.0)


def _case_ids(cases_dir: Path) -> list[str]:
    out = []
    for child in sorted(cases_dir.iterdir()):
        if (child / "scan.nii.gz").is_file() and (child / "tree.obj").is_file():
            out.append(child.name)
    return out


def _bone_listing(session: Session) -> list[dict]:
    return [
        {"id": b.id, "parent": b.parent_id, "head": list(map(float, b.head)), "tail": list(map(float, b.tail))}
        for b in session.armature.bones
    ]


def _session_info(session: Session) -> dict:
    return {
        "session": session.session_id,
        "case": session.case_id,
        "slices": session.slice_count,
        "dims": [int(d) for d in session.volume.dims],
        "spacing": [float(s) for s in session.volume.spacing],
        "origin": [float(o) for o in session.volume.origin],
        "bones": _bone_listing(session),
        "root": session.armature.root.id if len(session.armature) else None,
        "cursor": session.cursor,
        "log_length": len(session.log),
    }


def _contours_payload(session: Session, k: int) -> dict:
    cs = session.contours_at(k)
    polygons = []
    bones = []
    if cs.polygons:
        posed = _posed_segments(session)
        for poly in cs.polygons:
            polygons.append([[float(x), float(y)] for x, y in poly])
            bones.append(_nearest_bone(posed, poly, cs.z_mm))
    return {
        "z_index": k,
        "z_mm": cs.z_mm,
        "polygons": polygons,
        "bones": bones,
        "cursor": session.cursor,
    }


def _posed_segments(session: Session) -> list[tuple[str, np.ndarray, np.ndarray]]:
    from .armature import posed_bones

    pb = posed_bones(session.armature, session.pose)
    return [(bid, head, tail) for bid, (head, tail) in pb.items()]


def _nearest_bone(posed, poly: np.ndarray, z_mm: float) -> str:
    centroid = np.array([poly[:-1, 0].mean(), poly[:-1, 1].mean(), z_mm])
    best, best_d = "", np.inf
    for bid, head, tail in posed:
        d = tail - head
        L2 = float(d @ d)
        t = 0.0 if L2 == 0 else float(np.clip((centroid - head) @ d / L2, 0.0, 1.0))
        dist = float(np.linalg.norm(centroid - (head + t * d)))
        if dist < best_d:
            best, best_d = bid, dist
    return best


def create_app(cases_dir: str | Path):
    from fastapi import FastAPI, HTTPException, Response

    cases_dir = Path(cases_dir)
    if not cases_dir.is_dir():
        raise CaseError(f"case directory {cases_dir} does not exist")

    app = FastAPI(title="vessel registration service")
    sessions: dict[str, tuple[Session, threading.Lock]] = {}

    def get_session(sid: str) -> tuple[Session, threading.Lock]:
        entry = sessions.get(sid)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"no session {sid}")
        return entry

    def bad_request(exc: CorosegError) -> "HTTPException":
        return HTTPException(status_code=400, detail=str(exc))

    @app.get("/cases")
    def list_cases():
        return {"cases": _case_ids(cases_dir)}

    @app.post("/sessions")
    def create_session(body: dict):
        case = body.get("case")
        if not case or "/" in str(case) or str(case).startswith("."):
            raise HTTPException(status_code=400, detail="body needs a valid 'case' id")
        case_path = cases_dir / case
        if not case_path.is_dir():
            raise HTTPException(status_code=404, detail=f"no case {case}")
        try:
            session = open_session(case_path)
        except CorosegError as exc:
            raise bad_request(exc)
        sessions[session.session_id] = (session, threading.Lock())
        return _session_info(session)

    @app.get("/sessions/{sid}")
    def session_info(sid: str):
        session, lock = get_session(sid)
        with lock:
            return _session_info(session)

    @app.get("/sessions/{sid}/slices/{k}")
    def get_slice(sid: str, k: int, low: float = DEFAULT_WINDOW[0], high: float = DEFAULT_WINDOW[1]):
        session, lock = get_session(sid)
        with lock:
            try:
                png = session.slice_png(k, WindowSpec(low, high))
            except CorosegError as exc:
                raise bad_request(exc)
        return Response(content=png, media_type="image/png")

    @app.get("/sessions/{sid}/contours/{k}")
    def get_contours(sid: str, k: int):
        session, lock = get_session(sid)
        with lock:
            try:
                return _contours_payload(session, k)
            except CorosegError as exc:
                raise bad_request(exc)

    @app.post("/sessions/{sid}/edits")
    def post_edit(sid: str, body: dict):
        session, lock = get_session(sid)
        with lock:
            try:
                session.apply(_edit_from_body(body))
            except CorosegError as exc:
                raise bad_request(exc)
            return {"cursor": session.cursor, "log_length": len(session.log), "bones": _bone_listing(session)}

    @app.post("/sessions/{sid}/undo")
    def post_undo(sid: str):
        session, lock = get_session(sid)
        with lock:
            session.undo()
            return {"cursor": session.cursor, "log_length": len(session.log), "bones": _bone_listing(session)}

    @app.post("/sessions/{sid}/save")
    def post_save(sid: str, body: dict | None = None):
        session, lock = get_session(sid)
        out_dir = (body or {}).get("out_dir")
        if out_dir is None:
            if session.case_dir is None:
                raise HTTPException(status_code=400, detail="no default output directory")
            out_dir = session.case_dir / "gt"
        with lock:
            try:
                return session.save_gt(out_dir)
            except CorosegError as exc:
                raise bad_request(exc)

    return app


def _edit_from_body(body: dict) -> Edit:
    import time

    obj = dict(body)
    kind = obj.pop("kind", None)
    if kind not in ("rotate", "rigid", "cut", "vertex_nudge", "set_pose"):
        raise InputError(f"unknown edit kind {kind!r}")
    t = float(obj.pop("ts", time.time()))
    return Edit(kind, obj, t)


def serve(cases_dir: str | Path, port: int = 8000, host: str = "127.0.0.1") -> None:
    import uvicorn

    uvicorn.run(create_app(cases_dir), host=host, port=port)
