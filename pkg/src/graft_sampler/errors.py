"""Exception hierarchy shared across the package."""
from __future__ import annotations


class GraftSamplerError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(GraftSamplerError, ValueError):
    """A caller-supplied value violates a documented precondition."""


class ConfigError(GraftSamplerError):
    """Run configuration failed to parse or validate; names the offending key."""


class SingularTimeError(GraftSamplerError):
    """Velocity requested at t = 1 for a component with zero stdev."""


class NumericFailureError(GraftSamplerError):
    """Non-finite value produced during integration; carries the step index."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class BackendUnavailableError(GraftSamplerError):
    """Remote backend unreachable after the configured retries."""


class ProtocolError(GraftSamplerError):
    """Remote backend answered outside the wire schema."""


class SamplerAbort(GraftSamplerError):
    """A run aborted mid-flight; carries the partial trajectory."""

    def __init__(self, message: str, partial=None, cause: Exception | None = None):
        super().__init__(message)
        self.partial = partial
        self.cause = cause
