"""Reference predictor service for the spanrel wire protocol."""

from .model import ModelAnswer, ModelError, OverlapModel, load_model, predict_batch
from .server import SidecarConfig, build_app

__version__ = "0.1.0"

__all__ = [
    "ModelAnswer",
    "ModelError",
    "OverlapModel",
    "SidecarConfig",
    "build_app",
    "load_model",
    "predict_batch",
]
