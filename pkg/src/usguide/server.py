"""Session-oriented guidance service.

Endpoints (JSON bodies):
  POST /api/v1/session                {phantom_config?, seed?} -> {session_id}
  PUT  /api/v1/session/{id}/state    {pose, wrench} -> {frame, quality, oracle}
  GET  /api/v1/session/{id}/suggest  ?n=&seed= -> GuidanceSuggestion fields
  GET  /api/v1/healthz               -> {status, model_hash}
  WS   /api/v1/session/{id}/stream   message schema "usg_ws_v1"

`frame` is base64 of H*W*C little-endian float32 pixels. The loaded model
is shared read-only; per-session operations are serialized by a lock.
"""

import base64
import json
import threading
import time
import uuid

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import guidance as gd
from . import model as qm
from . import phantom
from .errors import GuidanceInfeasibleError, InvalidStateError, UsguideError

WS_VERSION = "usg_ws_v1"


class SessionCreate(BaseModel):
    phantom_config: str | None = None  # phantom_v1 text
    seed: int = 0


class StateUpdate(BaseModel):
    pose: list[float]
    wrench: list[float]


class Session:
    def __init__(self, sid, config, seed):
        self.id = sid
        self.config = config
        self.seed = int(seed)
        self.state = None
        self.frame = None
        self.created_at = time.time()
        self.lock = threading.Lock()


def _error(status, code, message, extra=None):
    body = {"error": {"code": code, "message": message}}
    if extra:
        body["error"].update(extra)
    return JSONResponse(status_code=status, content=body)


def _probe_state(payload: StateUpdate):
    pose = np.asarray(payload.pose, dtype=np.float64)
    wrench = np.asarray(payload.wrench, dtype=np.float64)
    if pose.shape != (4,):
        raise InvalidStateError("pose must have 4 components")
    if wrench.shape != (6,):
        raise InvalidStateError("wrench must have 6 components")
    if wrench[2] < 0:
        raise _NegativeForce()
    if abs(np.linalg.norm(pose) - 1.0) > 1e-3:
        raise InvalidStateError("pose quaternion is not unit length")
    # canonicalize server-side as well (defense in depth)
    return phantom.ProbeState(pose / np.linalg.norm(pose), wrench)


class _NegativeForce(UsguideError):
    pass


def _frame_b64(frame: phantom.UltrasoundFrame) -> str:
    return base64.b64encode(
        np.ascontiguousarray(frame.pixels, dtype="<f4").tobytes()).decode("ascii")


def create_app(model: qm.QualityModel, config: phantom.PhantomConfig,
               experience: gd.Experience | None = None) -> FastAPI:
    app = FastAPI(title="usguide service")
    sessions: dict[str, Session] = {}
    mhash = qm.model_hash(model)
    h, w, c = model.config.image_size

    def get_session(sid):
        return sessions.get(sid)

    @app.get("/api/v1/healthz")
    def healthz():
        return {"status": "ok", "model_hash": mhash, "ws_version": WS_VERSION,
                "image_size": [h, w, c]}

    @app.post("/api/v1/session")
    def create_session(payload: SessionCreate):
        if payload.phantom_config is not None:
            try:
                cfg = phantom.config_from_text(payload.phantom_config)
            except UsguideError as exc:
                return _error(422, "bad_phantom_config", str(exc))
        else:
            cfg = config
        if tuple(cfg.image_size) != (h, w, c):
            return _error(422, "image_size_mismatch",
                          f"model expects {h}x{w}x{c} frames")
        sid = uuid.uuid4().hex
        sessions[sid] = Session(sid, cfg, payload.seed)
        return {"session_id": sid, "seed": payload.seed}

    def _apply_state(sess: Session, payload: StateUpdate):
        try:
            state = _probe_state(payload)
        except _NegativeForce:
            return None, _error(422, "negative_normal_force",
                                "normal force Fz must be >= 0")
        except UsguideError as exc:
            return None, _error(422, "invalid_state", str(exc))
        frame = phantom.render(state, sess.config, sess.seed)
        quality = qm.forward(model, frame, state)["confidence"]
        oracle = phantom.oracle_quality(state, sess.config)
        sess.state = state
        sess.frame = frame
        result = {
            "frame": _frame_b64(frame),
            "quality": quality,
            "oracle": {"label": oracle["label"], "score": oracle["score"]},
            "pose": [float(v) for v in state.pose],
            "wrench": [float(v) for v in state.wrench],
        }
        return result, None

    @app.put("/api/v1/session/{sid}/state")
    def set_state(sid: str, payload: StateUpdate):
        sess = get_session(sid)
        if sess is None:
            return _error(404, "unknown_session", f"no session {sid}")
        with sess.lock:
            result, err = _apply_state(sess, payload)
        return err if err is not None else result

    def _suggest(sess: Session, n: int, seed: int):
        if experience is None:
            return None, _error(409, "no_experience",
                                "server started without an experience dataset")
        if sess.state is None or sess.frame is None:
            return None, _error(409, "no_state", "set a probe state first")
        cfg = gd.GuidanceConfig(n_samples=n, seed=seed)
        try:
            sug = gd.suggest(model, experience, sess.frame, sess.state, cfg)
        except GuidanceInfeasibleError as exc:
            return None, _error(422, "guidance_infeasible", str(exc),
                                extra={"diagnostics": exc.diagnostics})
        return {
            "pose": [float(v) for v in sug.pose],
            "wrench": [float(v) for v in sug.wrench],
            "q_best": sug.q_best,
            "n_evaluated": sug.n_evaluated,
            "n_feasible": sug.n_feasible,
            "elapsed_ms": sug.elapsed_ms,
            "candidate_index": sug.candidate_index,
        }, None

    @app.get("/api/v1/session/{sid}/suggest")
    def suggest_endpoint(sid: str, n: int = 1000, seed: int = 0):
        sess = get_session(sid)
        if sess is None:
            return _error(404, "unknown_session", f"no session {sid}")
        with sess.lock:
            result, err = _suggest(sess, n, seed)
        return err if err is not None else result

    @app.websocket("/api/v1/session/{sid}/stream")
    async def stream(ws: WebSocket, sid: str):
        sess = get_session(sid)
        await ws.accept()
        await ws.send_json({"type": "hello", "version": WS_VERSION})
        if sess is None:
            await ws.send_json({"type": "error", "code": "unknown_session",
                                "message": f"no session {sid}"})
            await ws.close()
            return
        try:
            while True:
                msg = await ws.receive_json()
                seq = msg.get("seq", 0)
                kind = msg.get("type")
                if kind == "state":
                    try:
                        payload = StateUpdate(pose=msg["pose"], wrench=msg["wrench"])
                    except Exception as exc:
                        await ws.send_json({"type": "error", "seq": seq,
                                            "code": "bad_message",
                                            "message": str(exc)})
                        continue
                    with sess.lock:
                        result, err = _apply_state(sess, payload)
                    if err is not None:
                        detail = json.loads(err.body.decode())["error"]
                        await ws.send_json({"type": "error", "seq": seq, **detail})
                    else:
                        await ws.send_json({"type": "update", "seq": seq, **result})
                elif kind == "suggest":
                    with sess.lock:
                        result, err = _suggest(sess, int(msg.get("n", 1000)),
                                               int(msg.get("seed", 0)))
                    if err is not None:
                        detail = json.loads(err.body.decode())["error"]
                        await ws.send_json({"type": "error", "seq": seq, **detail})
                    else:
                        await ws.send_json({"type": "suggestion", "seq": seq,
                                            **result})
                else:
                    await ws.send_json({"type": "error", "seq": seq,
                                        "code": "bad_message",
                                        "message": f"unknown type {kind!r}"})
        except WebSocketDisconnect:
            return

    return app
