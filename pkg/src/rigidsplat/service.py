"""Session-oriented manipulation service.

Each session owns a scene bundle, an anchor graph, rigid groups, and a
persistent optimizer; clients set drag constraints, request bounded
optimization bursts, and poll binary state snapshots.  At most one burst
runs per session at a time; reads always see the last fully completed step.
"""

from __future__ import annotations

import copy
import json
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import Body, FastAPI, Request, Response
from fastapi.responses import JSONResponse, PlainTextResponse

from . import config as configmod
from .anchors import build_anchor_graph
from .errors import (
    EngineError,
    InvalidInputError,
    NumericalFailureError,
    SessionBusyError,
    SessionNotFoundError,
)
from .geom import GaussianSet
from .matching import PixelMatchSet, associate
from .optimize import DeformOptimizer
from .sceneio import load_bundle
from .segmentation import RigidGroupSet

_STATUS_FOR_CODE = {
    "session-not-found": 404,
    "session-busy": 409,
    "no-correspondence": 422,
    "numerical-failure": 500,
}


@dataclass
class _Snapshot:
    """Immutable view of a fully completed step, swapped in atomically."""

    positions: bytes
    labels: bytes
    n: int
    history: list[dict]
    steps_done: int


@dataclass
class _Session:
    sid: str
    bundle: object
    config: dict
    optimizer: DeformOptimizer
    lock: threading.Lock = field(default_factory=threading.Lock)
    snapshot: _Snapshot | None = None
    has_constraints: bool = False

    def take_snapshot(self) -> None:
        state = self.optimizer.current_state()
        labels = self.optimizer.groups.labels()
        self.snapshot = _Snapshot(
            positions=state.mu1.astype("<f4").tobytes(),
            labels=labels.astype("<i4").tobytes(),
            n=int(state.mu1.shape[0]),
            history=list(self.optimizer.history),
            steps_done=self.optimizer.steps_done,
        )


def _make_optimizer(bundle, cfg) -> DeformOptimizer:
    gaussians = bundle.gaussians
    if bundle.labels is not None:
        groups = RigidGroupSet.from_labels(np.asarray(bundle.labels))
    else:
        groups = RigidGroupSet(groups=[], transforms=[],
                               n_total=gaussians.mu.shape[0])
    graph = build_anchor_graph(gaussians, cfg["s_voxel"], cfg["k_anchor"],
                               cfg["arap_k"])
    # constraints arrive with the first set-drags call
    return DeformOptimizer(gaussians, None, None, groups,
                           configmod.to_optimize_config(cfg), graph=graph)


def create_app(default_scene=None, config=None) -> FastAPI:
    cfg_base = dict(config) if config else configmod.resolve_config()
    app = FastAPI(title="rigidsplat manipulation service")
    sessions: dict[str, _Session] = {}
    registry_lock = threading.Lock()

    def get_session(sid: str) -> _Session:
        with registry_lock:
            sess = sessions.get(sid)
        if sess is None:
            raise SessionNotFoundError(f"unknown session '{sid}'")
        return sess

    @app.exception_handler(EngineError)
    async def engine_error_handler(request: Request, exc: EngineError):
        status = _STATUS_FOR_CODE.get(exc.code, 400)
        body = {"error": {"code": exc.code, "message": str(exc),
                          "type": type(exc).__name__}}
        term = getattr(exc, "term", None)
        if term is not None:
            body["error"]["term"] = term
        return JSONResponse(status_code=status, content=body)

    @app.post("/sessions")
    def create_session(payload: dict | None = Body(None)):
        payload = payload or {}
        scene = payload.get("scene", default_scene)
        if scene is None:
            raise InvalidInputError("no scene bundle given and no default "
                                    "configured")
        bundle = load_bundle(scene)
        sess = _Session(sid=uuid.uuid4().hex, bundle=bundle, config=cfg_base,
                        optimizer=_make_optimizer(bundle, cfg_base))
        sess.take_snapshot()
        with registry_lock:
            sessions[sess.sid] = sess
        return {"session": sess.sid, "status": "idle",
                "n_gaussians": sess.snapshot.n,
                "groups": sorted((len(g) for g in
                                  sess.optimizer.groups.groups),
                                 reverse=True)}

    @app.post("/sessions/{sid}/drags")
    def set_drags(sid: str, payload: dict = Body(...)):
        sess = get_session(sid)
        if "camera" not in payload or "drags" not in payload:
            raise InvalidInputError("payload needs 'camera' and 'drags'")
        camera_id = int(payload["camera"])
        camera = sess.bundle.cameras.get(camera_id)
        if camera is None:
            raise InvalidInputError(f"unknown camera id {camera_id}")
        drags = payload["drags"]
        if not drags:
            raise InvalidInputError("at least one drag pair is required")
        for k, d in enumerate(drags):
            for want in ("x_p", "y_p", "x_t", "y_t"):
                if want not in d:
                    raise InvalidInputError(f"drag {k} missing '{want}'")
        picks = np.array([[d["x_p"], d["y_p"]] for d in drags], dtype=float)
        targets = np.array([[d["x_t"], d["y_t"]] for d in drags], dtype=float)
        matches = PixelMatchSet(view_id=camera_id, xy_r=picks, xy_t=targets,
                                conf=np.ones(len(drags)))
        if not sess.lock.acquire(blocking=False):
            raise SessionBusyError("a step burst is in progress")
        try:
            cfg = sess.config
            # picks resolve against the state the user is looking at
            state = sess.optimizer.current_state()
            displayed = GaussianSet(mu=state.mu1, q=state.q1,
                                    s=sess.bundle.gaussians.s,
                                    alpha=sess.bundle.gaussians.alpha,
                                    sh=sess.bundle.gaussians.sh)
            g2p, sources = associate(
                matches, displayed, camera,
                tau_vis=cfg["tau_vis"], radius_px=cfg["radius_px"],
                mask=sess.bundle.mask_for(camera_id), cell_px=cfg["cell_px"],
                with_sources=True)
            sess.optimizer.set_constraints(g2p)
            sess.optimizer.camera = camera
            sess.has_constraints = True
        finally:
            sess.lock.release()
        resolved = [{"drag": int(s), "gaussian": int(g)}
                    for s, g in sorted(zip(sources, g2p.ids))]
        unresolved = sorted(set(range(len(drags))) -
                            {int(s) for s in sources})
        return {"resolved": resolved, "unresolved": unresolved}

    @app.post("/sessions/{sid}/step")
    def step(sid: str, payload: dict | None = Body(None)):
        sess = get_session(sid)
        payload = payload or {}
        n = int(payload.get("n", 0))
        if n < 0:
            raise InvalidInputError("n must be >= 0")
        if n == 0:
            snap = sess.snapshot
            return {"session": sid, "status": "idle",
                    "steps_done": snap.steps_done,
                    "loss": snap.history[-1] if snap.history else None,
                    "echo": True}
        if not sess.has_constraints:
            raise InvalidInputError("set drag constraints before stepping")
        if not sess.lock.acquire(blocking=False):
            raise SessionBusyError("a step burst is in progress")
        try:
            opt = sess.optimizer
            # rollback point: the last completed state before this burst
            saved = (copy.deepcopy(opt.graph), copy.deepcopy(opt.groups),
                     copy.deepcopy(opt.adam_q), copy.deepcopy(opt.adam_t),
                     list(opt.history), opt.steps_done)
            try:
                for _ in range(n):
                    opt.step_once()
            except NumericalFailureError:
                (opt.graph, opt.groups, opt.adam_q, opt.adam_t,
                 opt.history, opt.steps_done) = saved
                sess.take_snapshot()
                raise
            sess.take_snapshot()
        finally:
            sess.lock.release()
        snap = sess.snapshot
        return {"session": sid, "status": "idle",
                "steps_done": snap.steps_done,
                "loss": snap.history[-1] if snap.history else None,
                "groups": sorted((len(g) for g in opt.groups.groups),
                                 reverse=True)}

    @app.get("/sessions/{sid}/state")
    def get_state(sid: str):
        sess = get_session(sid)
        snap = sess.snapshot  # atomic reference read
        header = json.dumps({
            "n": snap.n,
            "positions_dtype": "<f4",
            "positions_shape": [snap.n, 3],
            "labels_dtype": "<i4",
            "steps_done": snap.steps_done,
            "history": snap.history,
        }, sort_keys=True)
        body = header.encode("utf-8") + b"\n" + snap.positions + snap.labels
        return Response(content=body,
                        media_type="application/octet-stream")

    @app.get("/sessions/{sid}/groups")
    def get_groups(sid: str):
        sess = get_session(sid)
        labels = np.frombuffer(sess.snapshot.labels, dtype="<i4")
        lines = ["# gaussian_id group_label (-1 = ungrouped)"]
        lines += [f"{gid} {lab}" for gid, lab in enumerate(labels)]
        return PlainTextResponse("\n".join(lines) + "\n")

    @app.delete("/sessions/{sid}")
    def delete_session(sid: str):
        with registry_lock:
            sess = sessions.pop(sid, None)
        if sess is None:
            raise SessionNotFoundError(f"unknown session '{sid}'")
        return {"deleted": sid}

    return app
