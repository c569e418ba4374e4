from .app import PROTOCOL_HEADER, PROTOCOL_VERSION, create_app, serve
from .checkpoint import ServerConfig, StubCheckpoint, load_checkpoint

__version__ = "0.1.0"

__all__ = [
    "PROTOCOL_HEADER",
    "PROTOCOL_VERSION",
    "ServerConfig",
    "StubCheckpoint",
    "create_app",
    "load_checkpoint",
    "serve",
]
