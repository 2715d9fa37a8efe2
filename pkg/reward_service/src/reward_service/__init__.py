"""HTTP shim exposing a forward-synthesis model for reward scoring."""

from .app import create_app
from .backend import CachingBackend, MockBackend

__all__ = ["CachingBackend", "MockBackend", "create_app"]
