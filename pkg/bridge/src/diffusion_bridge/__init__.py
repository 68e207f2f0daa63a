"""Wire-protocol server adapter for rectified-flow text-to-image models."""
from .adapters import SD3Adapter, ToyAdapter, load_adapter
from .config import BridgeConfig
from .errors import BridgeConfigError, BridgeError, ModelLoadError, RequestError
from .server import BridgeInBackground, create_app, serve

__version__ = "0.1.0"

__all__ = [
    "BridgeConfig",
    "BridgeConfigError",
    "BridgeError",
    "BridgeInBackground",
    "ModelLoadError",
    "RequestError",
    "SD3Adapter",
    "ToyAdapter",
    "create_app",
    "load_adapter",
    "serve",
]
