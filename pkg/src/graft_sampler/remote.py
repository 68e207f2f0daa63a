"""Wire-protocol client: drives any server implementing the velocity/scorer schema."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Sequence
from urllib.parse import urlparse

import numpy as np
import requests

from . import wire
from .engine import Condition
from .errors import BackendUnavailableError, InvalidArgumentError, ProtocolError

LOGGER = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 120.0
DEFAULT_RETRIES = 2
RETRY_DELAY = 0.2


@dataclass(frozen=True)
class RemoteConfig:
    endpoint: str
    timeout: float = DEFAULT_TIMEOUT
    retries: int = DEFAULT_RETRIES

    def __post_init__(self):
        parsed = urlparse(self.endpoint)
        if parsed.scheme not in ("http", "https") or not parsed.netloc:
            raise InvalidArgumentError(f"endpoint must be an http(s) URL, got {self.endpoint!r}")
        if self.retries < 0:
            raise InvalidArgumentError(f"retries must be >= 0, got {self.retries}")
        if not self.timeout > 0:
            raise InvalidArgumentError(f"timeout must be positive, got {self.timeout}")


class RemoteBackend:
    """Velocity model and scorer over the wire; retries transient failures.

    Requests within one trajectory are serialized by the engine; cross-trajectory
    concurrency is allowed only when the server's health advertises it.
    """

    def __init__(self, config: RemoteConfig, session: requests.Session | None = None):
        self.config = config
        self.session = session or requests.Session()
        self._health: dict | None = None

    # -- transport ----------------------------------------------------------
    def _request(self, method: str, path: str, body: dict | None = None) -> dict:
        url = self.config.endpoint.rstrip("/") + path
        attempts = self.config.retries + 1
        last: Exception | None = None
        for attempt in range(attempts):
            try:
                resp = self.session.request(method, url, json=body, timeout=self.config.timeout)
            except (requests.ConnectionError, requests.Timeout) as exc:
                last = exc
                LOGGER.warning("request %s failed (attempt %d/%d): %s",
                               path, attempt + 1, attempts, exc)
                if attempt + 1 < attempts:
                    time.sleep(RETRY_DELAY * (attempt + 1))
                continue
            if resp.status_code >= 500:
                last = BackendUnavailableError(f"{path} returned {resp.status_code}")
                LOGGER.warning("request %s got %d (attempt %d/%d)",
                               path, resp.status_code, attempt + 1, attempts)
                if attempt + 1 < attempts:
                    time.sleep(RETRY_DELAY * (attempt + 1))
                continue
            try:
                payload = resp.json()
            except ValueError as exc:
                raise ProtocolError(f"{path} response is not JSON: {exc}") from exc
            if resp.status_code != 200:
                raise ProtocolError(
                    f"{path} rejected with {resp.status_code}: {payload.get('error', payload)}"
                )
            return payload
        raise BackendUnavailableError(
            f"{path} unreachable after {attempts} attempts: {last}"
        ) from last

    # -- wire operations ------------------------------------------------------
    def health(self, refresh: bool = False) -> dict:
        if self._health is None or refresh:
            self._health = wire.validate_health(self._request("GET", wire.HEALTH_PATH))
        return self._health

    @property
    def concurrent_safe(self) -> bool:
        return bool(self.health().get("concurrent_safe", False))

    @property
    def latent_shape(self) -> tuple[int, ...]:
        return tuple(self.health()["latent_shape"])

    def velocities(self, x: np.ndarray, t: float, conditions: Sequence[Condition],
                   step: int = -1) -> dict[str, np.ndarray]:
        x = np.asarray(x, dtype=float)
        health = self.health()
        if not health["ok"]:
            raise BackendUnavailableError("server health reports not ok")
        if x.ndim == 1 and tuple(health["latent_shape"]) != x.shape:
            raise ProtocolError(
                f"state shape {list(x.shape)} != server latent shape {health['latent_shape']}"
            )
        body = {
            "step": int(step),
            "t": float(t),
            "state": wire.encode_array(x),
            "conditions": [{"id": c.id, "text": c.text} for c in conditions],
        }
        payload = self._request("POST", wire.VELOCITY_PATH, body)
        return wire.validate_velocities(payload, [c.id for c in conditions], x.shape)

    def similarity(self, x: np.ndarray, text: str) -> float:
        body = {"state": wire.encode_array(np.asarray(x, dtype=float)), "text": text}
        return wire.validate_score(self._request("POST", wire.SIMILARITY_PATH, body))

    def decode(self, x: np.ndarray) -> bytes:
        body = {"state": wire.encode_array(np.asarray(x, dtype=float))}
        return wire.validate_image(self._request("POST", wire.DECODE_PATH, body))


@dataclass
class RemoteScorer:
    """Similarity scorer bound to one prompt (the layout prompt in grafted runs)."""

    backend: RemoteBackend
    text: str

    def score(self, x: np.ndarray) -> float:
        return self.backend.similarity(x, self.text)


def remote_velocity(backend: RemoteBackend, x: np.ndarray, t: float,
                    conditions: Sequence[Condition], step: int = -1) -> dict[str, np.ndarray]:
    return backend.velocities(x, t, conditions, step=step)


def remote_similarity(backend: RemoteBackend, x: np.ndarray, text: str) -> float:
    return backend.similarity(x, text)
