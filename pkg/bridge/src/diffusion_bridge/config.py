"""Launch configuration for the bridge server."""
from __future__ import annotations

from dataclasses import dataclass

from .errors import BridgeConfigError

DEFAULT_MODEL = "stabilityai/stable-diffusion-3-medium-diffusers"
DEFAULT_SIMILARITY_MODEL = "openai/clip-vit-base-patch32"
TOY_MODEL = "toy"


@dataclass(frozen=True)
class BridgeConfig:
    """Everything needed to load one model and serve it on one port.

    latent_shape is the shape advertised on /v1/health; None adopts the loaded
    model's shape, an explicit value must match it exactly.
    """

    model: str = DEFAULT_MODEL
    device: str = "auto"  # auto | cpu | cuda
    latent_shape: tuple[int, ...] | None = None
    similarity_model: str = DEFAULT_SIMILARITY_MODEL
    host: str = "127.0.0.1"
    port: int = 8601

    def __post_init__(self):
        if not self.model:
            raise BridgeConfigError("model identifier must be non-empty")
        if self.device not in ("auto", "cpu", "cuda"):
            raise BridgeConfigError(f"device must be auto|cpu|cuda, got {self.device!r}")
        if self.latent_shape is not None:
            shape = tuple(int(v) for v in self.latent_shape)
            if not shape or any(v < 1 for v in shape):
                raise BridgeConfigError(f"latent shape must be positive, got {shape}")
            object.__setattr__(self, "latent_shape", shape)
        if not 0 <= self.port <= 65535:
            raise BridgeConfigError(f"port must be in 0..65535, got {self.port}")
