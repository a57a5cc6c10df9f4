"""Activation sidecar for scalematch: ResNet-50 stage outputs over stdio."""

from .server import ActivationServer, build_model, serve

__version__ = "0.1.0"

__all__ = ["ActivationServer", "build_model", "serve"]
