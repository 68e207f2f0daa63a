"""Wire schema shared by the remote client, the stub server, and external bridges.

Fixed paths:
    GET  /v1/health     -> {ok, latent_shape, concurrent_safe}
    POST /v1/velocity   {step, t, state, conditions:[{id,text}]} -> {velocities:[{id,data_b64}]}
    POST /v1/similarity {state, text} -> {score}
    POST /v1/decode     {state} -> {image_png_b64}

States and velocities travel as base64 little-endian float32 with an explicit
shape field: {"shape": [d], "data_b64": "..."}.
"""
from __future__ import annotations

import base64
import binascii
import math

import numpy as np

from .errors import ProtocolError

HEALTH_PATH = "/v1/health"
VELOCITY_PATH = "/v1/velocity"
SIMILARITY_PATH = "/v1/similarity"
DECODE_PATH = "/v1/decode"

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def encode_array(arr: np.ndarray) -> dict:
    arr = np.asarray(arr)
    payload = arr.astype("<f4").tobytes()
    return {"shape": list(arr.shape), "data_b64": base64.b64encode(payload).decode("ascii")}


def decode_array(obj: dict, what: str = "array") -> np.ndarray:
    if not isinstance(obj, dict) or "shape" not in obj or "data_b64" not in obj:
        raise ProtocolError(f"{what} must be an object with 'shape' and 'data_b64'")
    shape = obj["shape"]
    if (not isinstance(shape, list) or not shape
            or any(isinstance(v, bool) or not isinstance(v, int) or v < 1 for v in shape)):
        raise ProtocolError(f"{what} shape must be a list of positive integers, got {shape!r}")
    try:
        raw = base64.b64decode(obj["data_b64"], validate=True)
    except (binascii.Error, TypeError) as exc:
        raise ProtocolError(f"{what} payload is not valid base64: {exc}") from exc
    expected = int(np.prod(shape)) * 4
    if len(raw) != expected:
        raise ProtocolError(
            f"{what} payload is {len(raw)} bytes but shape {shape} needs {expected}"
        )
    return np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)


def validate_health(body: dict) -> dict:
    for key, kind in (("ok", bool), ("latent_shape", list), ("concurrent_safe", bool)):
        if key not in body:
            raise ProtocolError(f"health response missing {key!r}")
        if not isinstance(body[key], kind):
            raise ProtocolError(f"health field {key!r} must be {kind.__name__}")
    if any(isinstance(v, bool) or not isinstance(v, int) or v < 1 for v in body["latent_shape"]):
        raise ProtocolError(f"health latent_shape must be positive ints, got {body['latent_shape']}")
    return body


def validate_velocities(body: dict, requested_ids: list[str], shape: tuple[int, ...]) -> dict:
    """Check a velocity response: exactly the requested ids, vectors of the state shape."""
    if "velocities" not in body or not isinstance(body["velocities"], list):
        raise ProtocolError("velocity response missing 'velocities' list")
    out: dict[str, np.ndarray] = {}
    for entry in body["velocities"]:
        if not isinstance(entry, dict) or "id" not in entry:
            raise ProtocolError("velocity entry missing 'id'")
        vec = decode_array(entry, what=f"velocity {entry['id']!r}")
        if vec.shape != tuple(shape):
            raise ProtocolError(
                f"velocity {entry['id']!r} has shape {list(vec.shape)}, state has {list(shape)}"
            )
        out[entry["id"]] = vec
    for cid in requested_ids:
        if cid not in out:
            raise ProtocolError(f"velocity response missing id {cid!r}")
    extra = set(out) - set(requested_ids)
    if extra:
        raise ProtocolError(f"velocity response carries unrequested ids {sorted(extra)}")
    return out


def validate_score(body: dict) -> float:
    if "score" not in body:
        raise ProtocolError("similarity response missing 'score'")
    score = body["score"]
    if not isinstance(score, (int, float)) or isinstance(score, bool) or not math.isfinite(score):
        raise ProtocolError(f"similarity score must be a finite number, got {score!r}")
    if not -1.0 <= score <= 1.0:
        raise ProtocolError(f"similarity score {score} outside [-1, 1]")
    return float(score)


def validate_image(body: dict) -> bytes:
    if "image_png_b64" not in body:
        raise ProtocolError("decode response missing 'image_png_b64'")
    try:
        raw = base64.b64decode(body["image_png_b64"], validate=True)
    except (binascii.Error, TypeError) as exc:
        raise ProtocolError(f"decode payload is not valid base64: {exc}") from exc
    if not raw.startswith(PNG_MAGIC):
        raise ProtocolError("decode payload is not a PNG image")
    return raw
