"""Exception types local to the bridge."""
from __future__ import annotations


class BridgeError(Exception):
    """Base class for bridge errors."""


class BridgeConfigError(BridgeError):
    """Launch configuration is invalid."""


class ModelLoadError(BridgeError):
    """The configured model could not be loaded; health must report not-ok."""


class RequestError(BridgeError):
    """A request violates the wire schema or the model's domain; maps to HTTP 400."""
