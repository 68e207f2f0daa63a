"""FastAPI app serving one model adapter over the fixed wire paths."""
from __future__ import annotations

import base64
import logging
import threading
import time

import numpy as np
import uvicorn
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from graft_sampler import wire

from .adapters import ModelAdapter, load_adapter
from .config import BridgeConfig
from .errors import RequestError

LOGGER = logging.getLogger(__name__)


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=status)


def create_app(adapter: ModelAdapter | None, load_error: str | None = None) -> FastAPI:
    """App over a loaded adapter; with adapter=None health reports not-ok."""
    app = FastAPI(title="diffusion-bridge", docs_url=None, redoc_url=None)
    lock = threading.Lock()  # single in-flight model call; requests queue here

    def state_from(body: dict) -> np.ndarray:
        state = wire.decode_array(body.get("state"), what="state")
        if state.shape != adapter.latent_shape:
            raise RequestError(f"state has shape {list(state.shape)}, model expects "
                               f"{list(adapter.latent_shape)}")
        return state

    @app.get(wire.HEALTH_PATH)
    def health() -> dict:
        if adapter is None:
            return {"ok": False, "latent_shape": [], "concurrent_safe": False,
                    "error": load_error or "model not loaded"}
        return {"ok": True, "latent_shape": list(adapter.latent_shape),
                "concurrent_safe": False}

    async def guarded(request: Request, handler) -> JSONResponse:
        if adapter is None:
            return _error(503, load_error or "model not loaded")
        try:
            body = await request.json()
        except Exception:
            return _error(400, "request body is not valid JSON")
        if not isinstance(body, dict):
            return _error(400, "request body must be a JSON object")
        try:
            return JSONResponse(handler(body))
        except (RequestError, wire.ProtocolError) as exc:
            return _error(400, str(exc))
        except Exception as exc:  # defensive: structured body, never a hang
            LOGGER.exception("request failed")
            return _error(500, str(exc))

    def velocity(body: dict) -> dict:
        t = body.get("t")
        if not isinstance(t, (int, float)) or isinstance(t, bool):
            raise RequestError(f"t must be a number, got {t!r}")
        state = state_from(body)
        conditions = body.get("conditions")
        if not isinstance(conditions, list) or not conditions:
            raise RequestError("conditions must be a non-empty list")
        entries = []
        for cond in conditions:
            if not isinstance(cond, dict) or "id" not in cond:
                raise RequestError("each condition needs an 'id'")
            text = cond.get("text", "")
            with lock:  # one forward pass per condition
                vel = adapter.velocity(state, float(t), str(text))
            entries.append({"id": cond["id"], **wire.encode_array(vel)})
        return {"velocities": entries}

    def similarity(body: dict) -> dict:
        state = state_from(body)
        text = body.get("text")
        if not isinstance(text, str):
            raise RequestError(f"text must be a string, got {text!r}")
        with lock:
            score = adapter.similarity(state, text)
        return {"score": float(np.clip(score, -1.0, 1.0))}

    def decode(body: dict) -> dict:
        state = state_from(body)
        with lock:
            blob = adapter.decode(state)
        return {"image_png_b64": base64.b64encode(blob).decode("ascii")}

    @app.post(wire.VELOCITY_PATH)
    async def velocity_route(request: Request):
        return await guarded(request, velocity)

    @app.post(wire.SIMILARITY_PATH)
    async def similarity_route(request: Request):
        return await guarded(request, similarity)

    @app.post(wire.DECODE_PATH)
    async def decode_route(request: Request):
        return await guarded(request, decode)

    return app


def serve(config: BridgeConfig) -> None:
    """Load the configured model and serve it; blocks until interrupted."""
    adapter, load_error = load_adapter(config)
    if adapter is None:
        LOGGER.warning("serving with health not-ok: %s", load_error)
    app = create_app(adapter, load_error)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")


class BridgeInBackground:
    """Context manager running the app on a daemon thread (tests, smoke runs)."""

    def __init__(self, app: FastAPI, host: str = "127.0.0.1", port: int = 0):
        self.server = uvicorn.Server(uvicorn.Config(app, host=host, port=port,
                                                    log_level="warning"))
        self.thread = threading.Thread(target=self.server.run, daemon=True)

    @property
    def url(self) -> str:
        sock = self.server.servers[0].sockets[0]
        host, port = sock.getsockname()[:2]
        return f"http://{host}:{port}"

    def __enter__(self) -> "BridgeInBackground":
        self.thread.start()
        deadline = time.monotonic() + 10.0
        while not self.server.started:
            if time.monotonic() > deadline or not self.thread.is_alive():
                raise RuntimeError("bridge server failed to start")
            time.sleep(0.01)
        return self

    def __exit__(self, *exc) -> None:
        self.server.should_exit = True
        self.thread.join(timeout=5)
