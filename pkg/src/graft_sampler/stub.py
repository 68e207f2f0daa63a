"""Wire-protocol stub server hosting the analytic backend (plus test modes)."""
from __future__ import annotations

import io
import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from . import wire
from .analytic import (LayoutScorer, MixtureSpec, SceneSpec, condition_from_bundle,
                       layout_similarity, mixture_velocity, scene_for_bundle,
                       unconditional_spec)
from .errors import InvalidArgumentError
from .prompts import PromptBundle

LOGGER = logging.getLogger(__name__)

MODES = ("analytic", "zero", "echo")


def _render_png(state: np.ndarray) -> bytes:
    # Tiny deterministic scatter of the toy state; PNG is the wire contract.
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(2, 2), dpi=64)
    pts = np.atleast_2d(state)
    ax.scatter(pts[:, 0], pts[:, 1] if pts.shape[1] > 1 else np.zeros(len(pts)), s=40)
    ax.set_xlim(-4, 4), ax.set_ylim(-4, 4)
    ax.set_xticks([]), ax.set_yticks([])
    buf = io.BytesIO()
    fig.savefig(buf, format="png", metadata={"Software": None})
    plt.close(fig)
    return buf.getvalue()


class StubModel:
    """Request-level logic behind the HTTP handler; pure and thread-safe.

    analytic: exact mixture velocities/similarity, conditions resolved by text;
    zero: zero velocities and a constant similarity score;
    echo: velocities echo the request state back (byte round-trip tests).
    """

    def __init__(self, bundle: PromptBundle, scene: SceneSpec | None = None,
                 mode: str = "analytic", tau: float = 1.0, zero_score: float = 0.5):
        if mode not in MODES:
            raise InvalidArgumentError(f"stub mode must be one of {MODES}, got {mode!r}")
        self.mode = mode
        self.zero_score = zero_score
        self.tau = tau
        scene = scene or scene_for_bundle(bundle)
        layout = condition_from_bundle(bundle, scene, "layout")
        self.by_text: dict[str, MixtureSpec] = {
            "": unconditional_spec(scene),
            bundle.layout: layout,
            bundle.target: condition_from_bundle(bundle, scene, "target"),
            bundle.negative: condition_from_bundle(bundle, scene, "negative"),
        }
        self.scorer = LayoutScorer(layout, tau=tau)
        self.dim = layout.dim
        self.calls: dict[str, int] = {"health": 0, "velocity": 0, "similarity": 0, "decode": 0}
        self._lock = threading.Lock()

    def _count(self, endpoint: str) -> None:
        with self._lock:
            self.calls[endpoint] += 1

    def health(self) -> dict:
        self._count("health")
        return {"ok": True, "latent_shape": [self.dim], "concurrent_safe": True}

    def _spec_for_text(self, text: str) -> MixtureSpec:
        try:
            return self.by_text[text]
        except KeyError:
            raise InvalidArgumentError(f"stub does not understand the prompt {text!r}") from None

    def velocity(self, body: dict) -> dict:
        self._count("velocity")
        state = wire.decode_array(body["state"], what="state")
        t = float(body["t"])
        out = []
        for cond in body["conditions"]:
            cid, text = cond["id"], cond.get("text", "")
            if self.mode == "zero":
                vec = np.zeros_like(state)
            elif self.mode == "echo":
                vec = state
            else:
                vec = mixture_velocity(state, t, self._spec_for_text(text))
            out.append({"id": cid, **wire.encode_array(vec)})
        return {"velocities": out}

    def similarity(self, body: dict) -> dict:
        self._count("similarity")
        state = wire.decode_array(body["state"], what="state")
        if self.mode in ("zero", "echo"):
            return {"score": self.zero_score}
        spec = self._spec_for_text(body.get("text", ""))
        return {"score": float(layout_similarity(state, spec, self.tau))}

    def decode(self, body: dict) -> dict:
        self._count("decode")
        state = wire.decode_array(body["state"], what="state")
        png = _render_png(state)
        import base64
        return {"image_png_b64": base64.b64encode(png).decode("ascii")}


class _Handler(BaseHTTPRequestHandler):
    model: StubModel  # set by make_server

    def log_message(self, fmt, *args):  # route through logging, not stderr
        LOGGER.debug("stub: " + fmt, *args)

    def _reply(self, code: int, body: dict) -> None:
        data = json.dumps(body).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        if self.path == wire.HEALTH_PATH:
            self._reply(200, self.model.health())
        else:
            self._reply(404, {"error": f"unknown path {self.path}"})

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        try:
            body = json.loads(self.rfile.read(length) or b"{}")
        except json.JSONDecodeError as exc:
            self._reply(400, {"error": f"request body is not JSON: {exc}"})
            return
        route = {
            wire.VELOCITY_PATH: self.model.velocity,
            wire.SIMILARITY_PATH: self.model.similarity,
            wire.DECODE_PATH: self.model.decode,
        }.get(self.path)
        if route is None:
            self._reply(404, {"error": f"unknown path {self.path}"})
            return
        try:
            self._reply(200, route(body))
        except Exception as exc:  # structured error body, never a hang
            LOGGER.exception("stub request failed")
            self._reply(400, {"error": str(exc)})


def make_server(model: StubModel, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Build the HTTP server (port 0 picks a free port); caller runs serve_forever."""
    handler = type("BoundHandler", (_Handler,), {"model": model})
    return ThreadingHTTPServer((host, port), handler)


class StubInBackground:
    """Context manager running a stub server on a daemon thread (tests, smoke runs)."""

    def __init__(self, model: StubModel, host: str = "127.0.0.1", port: int = 0):
        self.server = make_server(model, host, port)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def __enter__(self) -> "StubInBackground":
        self.thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)
