"""HTTP sidecar exposing face detection and embedding endpoints."""

from .app import create_app
from .model import DIMENSION, FaceModel

__all__ = ["create_app", "FaceModel", "DIMENSION"]
__version__ = "0.1.0"
