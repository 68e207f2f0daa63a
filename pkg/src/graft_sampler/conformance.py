"""Protocol-conformance corpus: fixed requests plus schema checks on the responses.

The same corpus exercises the bundled stub server and any external bridge; a
server conforms when every check passes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import requests

from . import wire
from .errors import ProtocolError

DEFAULT_TEXTS = {
    "target": "A photo of rice on the left and potato salad on the right",
    "layout": "A photo of a plate on the left and a plate on the right",
    "negative": "Empty plate",
}


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    message: str = ""


def _fixed_state(shape: tuple[int, ...]) -> np.ndarray:
    # Deterministic, float32-exact values so byte comparisons are stable.
    flat = (np.arange(int(np.prod(shape)), dtype=np.float64) - 3.0) / 4.0
    return flat.reshape(shape)


def conformance_corpus(latent_shape: tuple[int, ...],
                       texts: dict[str, str] | None = None) -> list[dict]:
    """Request corpus for a server advertising the given latent shape."""
    texts = texts or DEFAULT_TEXTS
    state = wire.encode_array(_fixed_state(tuple(latent_shape)))
    conditions = [
        {"id": "uncond", "text": ""},
        {"id": "target", "text": texts["target"]},
        {"id": "negative", "text": texts["negative"]},
    ]
    return [
        {"name": "health", "method": "GET", "path": wire.HEALTH_PATH},
        {"name": "velocity-three-conditions", "method": "POST", "path": wire.VELOCITY_PATH,
         "body": {"step": 0, "t": 0.005, "state": state, "conditions": conditions}},
        {"name": "velocity-single-condition", "method": "POST", "path": wire.VELOCITY_PATH,
         "body": {"step": 49, "t": 0.495, "state": state,
                  "conditions": [{"id": "layout", "text": texts["layout"]}]}},
        {"name": "velocity-late-step", "method": "POST", "path": wire.VELOCITY_PATH,
         "body": {"step": 99, "t": 0.995, "state": state, "conditions": conditions}},
        {"name": "similarity", "method": "POST", "path": wire.SIMILARITY_PATH,
         "body": {"state": state, "text": texts["layout"]}},
        {"name": "decode", "method": "POST", "path": wire.DECODE_PATH,
         "body": {"state": state}},
    ]


def _check_response(request: dict, body: dict, latent_shape: tuple[int, ...]) -> None:
    path = request["path"]
    if path == wire.HEALTH_PATH:
        health = wire.validate_health(body)
        if tuple(health["latent_shape"]) != tuple(latent_shape):
            raise ProtocolError(
                f"health latent_shape {health['latent_shape']} != expected {list(latent_shape)}"
            )
    elif path == wire.VELOCITY_PATH:
        ids = [c["id"] for c in request["body"]["conditions"]]
        vecs = wire.validate_velocities(body, ids, tuple(latent_shape))
        for cid, vec in vecs.items():
            if not np.all(np.isfinite(vec)):
                raise ProtocolError(f"velocity {cid!r} contains non-finite values")
    elif path == wire.SIMILARITY_PATH:
        wire.validate_score(body)
    elif path == wire.DECODE_PATH:
        wire.validate_image(body)
    else:  # pragma: no cover - corpus only names the four paths
        raise ProtocolError(f"unexpected path {path}")


def run_conformance(base_url: str, texts: dict[str, str] | None = None,
                    timeout: float = 60.0) -> list[CheckResult]:
    """Run the corpus against a live server; one result per request."""
    base = base_url.rstrip("/")
    session = requests.Session()
    health = session.get(base + wire.HEALTH_PATH, timeout=timeout).json()
    latent_shape = tuple(wire.validate_health(health)["latent_shape"])

    results = []
    for request in conformance_corpus(latent_shape, texts):
        name = request["name"]
        try:
            if request["method"] == "GET":
                resp = session.get(base + request["path"], timeout=timeout)
            else:
                resp = session.post(base + request["path"], json=request["body"],
                                    timeout=timeout)
            if resp.status_code != 200:
                raise ProtocolError(f"status {resp.status_code}: {resp.text[:200]}")
            _check_response(request, resp.json(), latent_shape)
        except Exception as exc:
            results.append(CheckResult(name=name, ok=False, message=str(exc)))
        else:
            results.append(CheckResult(name=name, ok=True))
    return results


def assert_conformance(base_url: str, texts: dict[str, str] | None = None,
                       timeout: float = 60.0) -> list[CheckResult]:
    """run_conformance, raising with every failure listed."""
    results = run_conformance(base_url, texts, timeout)
    failures = [r for r in results if not r.ok]
    if failures:
        detail = "; ".join(f"{r.name}: {r.message}" for r in failures)
        raise AssertionError(f"{len(failures)} conformance failure(s): {detail}")
    return results
