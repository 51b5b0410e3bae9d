"""HTTP inference service for the operator workflow.

A session tracks the shrinking pool of objects still in the bin: classify
requests rank only the remaining candidates, confirming an id removes it,
undo restores it. Sets are uploaded as prototype-set files; the encoder is
loaded once at startup. Sessions persist to an embedded SQLite store so a
console survives reconnects.
"""

from __future__ import annotations

import io
import json
import os
import sqlite3
import threading
import time
import uuid
from pathlib import Path

import numpy as np
from fastapi import Depends, FastAPI, File, Form, Header, HTTPException, UploadFile
from fastapi.responses import JSONResponse, Response

from .classify import AGGREGATION_METHODS, aggregate, classify_images
from .encoders import Encoder
from .errors import DigestMismatch, VersionMismatch
from .prototypes import ClassificationSet, load_set, save_set

__all__ = ["create_app", "SessionStore"]


class SessionStore:
    """Session state with optional SQLite persistence.

    Mutations (confirm/undo) are serialized per session; classify only
    reads. The persisted payload is the full JSON state keyed by
    session_id.
    """

    def __init__(self, state_path: str | None = None):
        self._lock = threading.Lock()
        self._sessions: dict = {}
        self._locks: dict = {}
        self._db = None
        if state_path:
            Path(state_path).parent.mkdir(parents=True, exist_ok=True)
            self._db = sqlite3.connect(state_path, check_same_thread=False)
            self._db.execute(
                "CREATE TABLE IF NOT EXISTS sessions (session_id TEXT PRIMARY KEY, payload TEXT)"
            )
            self._db.commit()
            for session_id, payload in self._db.execute(
                "SELECT session_id, payload FROM sessions"
            ):
                self._sessions[session_id] = json.loads(payload)
                self._locks[session_id] = threading.Lock()

    def _persist(self, session_id: str):
        if self._db is None:
            return
        payload = json.dumps(self._sessions[session_id])
        with self._lock:
            self._db.execute(
                "INSERT OR REPLACE INTO sessions (session_id, payload) VALUES (?, ?)",
                (session_id, payload),
            )
            self._db.commit()

    def create(self, set_id: str, object_ids: list[str]) -> dict:
        session_id = uuid.uuid4().hex[:12]
        state = {
            "session_id": session_id,
            "set_id": set_id,
            "remaining_ids": sorted(object_ids),
            "history": [],
            "last_query_ref": None,
            "last_predicted": None,
        }
        with self._lock:
            self._sessions[session_id] = state
            self._locks[session_id] = threading.Lock()
        self._persist(session_id)
        return state

    def get(self, session_id: str) -> dict:
        state = self._sessions.get(session_id)
        if state is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return state

    def all(self) -> list[dict]:
        return list(self._sessions.values())

    def lock(self, session_id: str) -> threading.Lock:
        self.get(session_id)
        return self._locks[session_id]

    def update(self, session_id: str):
        self._persist(session_id)


def _decode_upload(data: bytes, name: str) -> np.ndarray:
    from PIL import Image

    try:
        with Image.open(io.BytesIO(data)) as img:
            return np.asarray(img.convert("RGB"))
    except Exception as exc:
        raise HTTPException(status_code=422, detail=f"cannot decode image {name!r}: {exc}") from exc


def create_app(
    encoder: Encoder | None = None,
    sets_dir: str | None = None,
    meshes_dir: str | None = None,
    renders_dir: str | None = None,
    state_path: str | None = None,
    token: str | None = None,
) -> FastAPI:
    """Build the service app.

    ``sets_dir`` preloads any ``*.protoset`` files found there; uploads are
    also stored there when given. ``renders_dir``/``meshes_dir`` feed
    candidate thumbnails (pre-rendered PNGs preferred, lazy renders from
    meshes otherwise). ``token`` (or the PRINTID_TOKEN environment
    variable) enables bearer auth for everything except /healthz.
    """
    app = FastAPI(title="printid service")
    token = token if token is not None else os.environ.get("PRINTID_TOKEN")
    sets: dict[str, ClassificationSet] = {}
    store = SessionStore(state_path)
    thumb_cache: dict = {}

    if sets_dir:
        for p in sorted(Path(sets_dir).glob("*.protoset")):
            loaded = load_set(p)
            sets[loaded.set_id] = loaded

    def require_auth(authorization: str | None = Header(default=None)):
        if token is None:
            return
        if authorization != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or bad bearer token")

    auth = Depends(require_auth)

    def get_set(set_id: str) -> ClassificationSet:
        if set_id not in sets:
            raise HTTPException(status_code=404, detail=f"unknown set {set_id!r}")
        return sets[set_id]

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "encoder_loaded": encoder is not None, "n_sets": len(sets)}

    @app.post("/sets", dependencies=[auth])
    async def upload_set(file: UploadFile = File(...)):
        data = await file.read()
        try:
            loaded = load_set(data)
        except (DigestMismatch, VersionMismatch) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        sets[loaded.set_id] = loaded
        if sets_dir:
            save_set(loaded, Path(sets_dir) / f"{loaded.set_id}.protoset")
        return {"set_id": loaded.set_id, "n_objects": len(loaded)}

    @app.get("/sets", dependencies=[auth])
    def list_sets():
        return [
            {"set_id": s.set_id, "n_objects": len(s), "encoder_id": s.encoder_id}
            for s in sets.values()
        ]

    @app.get("/sets/{set_id}", dependencies=[auth])
    def set_detail(set_id: str):
        s = get_set(set_id)
        return {
            "set_id": s.set_id,
            "encoder_id": s.encoder_id,
            "dim": s.dim,
            "render_config_digest": s.render_config_digest,
            "objects": [
                {"object_id": p.object_id, "K": p.K} for p in s.prototypes.values()
            ],
        }

    @app.post("/sessions", dependencies=[auth])
    def create_session(body: dict):
        set_id = body.get("set_id")
        if not set_id:
            raise HTTPException(status_code=400, detail="body must carry set_id")
        s = get_set(set_id)
        state = store.create(set_id, s.object_ids)
        return {"session_id": state["session_id"], "remaining": len(state["remaining_ids"])}

    @app.get("/sessions", dependencies=[auth])
    def list_sessions():
        return [
            {
                "session_id": s["session_id"],
                "set_id": s["set_id"],
                "remaining": len(s["remaining_ids"]),
                "confirmed": len(s["history"]),
            }
            for s in store.all()
        ]

    @app.get("/sessions/{session_id}", dependencies=[auth])
    def session_detail(session_id: str):
        state = store.get(session_id)
        return {
            "session_id": session_id,
            "set_id": state["set_id"],
            "remaining": len(state["remaining_ids"]),
            "remaining_ids": state["remaining_ids"],
            "history": state["history"],
        }

    @app.post("/sessions/{session_id}/classify", dependencies=[auth])
    async def session_classify(
        session_id: str,
        images: list[UploadFile] = File(...),
        agg_method: str = Form("score_average"),
        top_k: int = Form(5),
        full_set: bool = Form(False),
    ):
        state = store.get(session_id)
        if encoder is None:
            raise HTTPException(status_code=503, detail="encoder not loaded")
        if agg_method not in AGGREGATION_METHODS:
            raise HTTPException(status_code=400, detail=f"unknown agg_method {agg_method!r}")
        s = get_set(state["set_id"])
        if encoder.encoder_id != s.encoder_id:
            raise HTTPException(
                status_code=503,
                detail=f"loaded encoder {encoder.encoder_id!r} does not match set "
                f"{s.encoder_id!r}",
            )
        arrays = [_decode_upload(await up.read(), up.filename or "image") for up in images]
        if not arrays:
            raise HTTPException(status_code=400, detail="no images supplied")
        refs = [up.filename or f"upload-{i}" for i, up in enumerate(images)]
        rankings = classify_images(arrays, s, encoder, query_refs=refs)
        ranking = rankings[0] if len(rankings) == 1 else aggregate(rankings, agg_method)
        remaining = set(state["remaining_ids"])
        pool = ranking.ranked_ids if full_set else [
            oid for oid in ranking.ranked_ids if oid in remaining
        ]
        candidates = [
            {
                "object_id": oid,
                "score": ranking.scores[oid],
                "thumbnail_url": f"/thumbnails/{s.set_id}/{oid}.png",
            }
            for oid in pool[: max(1, top_k)]
        ]
        state["last_query_ref"] = ranking.query_ref
        state["last_predicted"] = candidates[0]["object_id"] if candidates else None
        store.update(session_id)
        return {
            "session_id": session_id,
            "method": agg_method if len(rankings) > 1 else "single",
            "n_views": len(arrays),
            "remaining": len(remaining),
            "candidates": candidates,
        }

    @app.post("/sessions/{session_id}/confirm", dependencies=[auth])
    def session_confirm(session_id: str, body: dict):
        object_id = body.get("object_id")
        if not object_id:
            raise HTTPException(status_code=400, detail="body must carry object_id")
        with store.lock(session_id):
            state = store.get(session_id)
            if object_id not in state["remaining_ids"]:
                raise HTTPException(
                    status_code=409, detail=f"{object_id!r} is not in the remaining pool"
                )
            state["remaining_ids"].remove(object_id)
            state["history"].append(
                {
                    "query_ref": state.get("last_query_ref"),
                    "predicted": state.get("last_predicted"),
                    "confirmed_id": object_id,
                    "timestamp": time.time(),
                }
            )
            store.update(session_id)
            return {"session_id": session_id, "remaining": len(state["remaining_ids"])}

    @app.post("/sessions/{session_id}/undo", dependencies=[auth])
    def session_undo(session_id: str):
        with store.lock(session_id):
            state = store.get(session_id)
            if not state["history"]:
                raise HTTPException(status_code=409, detail="nothing to undo")
            last = state["history"].pop()
            state["remaining_ids"] = sorted(state["remaining_ids"] + [last["confirmed_id"]])
            store.update(session_id)
            return {
                "session_id": session_id,
                "restored": last["confirmed_id"],
                "remaining": len(state["remaining_ids"]),
            }

    @app.get("/thumbnails/{set_id}/{object_id}.png", dependencies=[auth])
    def thumbnail(set_id: str, object_id: str):
        s = get_set(set_id)
        if object_id not in s.prototypes:
            raise HTTPException(status_code=404, detail=f"unknown object {object_id!r}")
        key = (set_id, object_id)
        if key not in thumb_cache:
            png = _make_thumbnail(object_id, renders_dir, meshes_dir)
            if png is None:
                raise HTTPException(status_code=404, detail="no thumbnail source configured")
            thumb_cache[key] = png
        return Response(content=thumb_cache[key], media_type="image/png")

    @app.exception_handler(json.JSONDecodeError)
    def _bad_json(_request, exc):  # pragma: no cover - fastapi handles most cases
        return JSONResponse(status_code=400, content={"detail": f"malformed JSON: {exc}"})

    return app


def _make_thumbnail(object_id: str, renders_dir, meshes_dir) -> bytes | None:
    from PIL import Image

    if renders_dir:
        obj_dir = Path(renders_dir) / object_id
        if obj_dir.is_dir():
            pngs = sorted(obj_dir.glob("*.png"))
            if pngs:
                with Image.open(pngs[0]) as img:
                    buf = io.BytesIO()
                    img.convert("RGB").resize((128, 128)).save(buf, format="PNG")
                    return buf.getvalue()
    if meshes_dir:
        from .geometry import ViewpointSpec, load_mesh
        from .renderer import RenderConfig, render

        for suffix in (".stl", ".obj"):
            mesh_path = Path(meshes_dir) / f"{object_id}{suffix}"
            if mesh_path.exists():
                mesh = load_mesh(mesh_path, object_id=object_id)
                rendering = render(mesh, ViewpointSpec(30.0, 30.0), RenderConfig(image_size_px=128))
                buf = io.BytesIO()
                Image.fromarray(rendering.pixels).save(buf, format="PNG")
                return buf.getvalue()
    return None
