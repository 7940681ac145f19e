"""Repeater-swarm-assisted massive MIMO uplink: stability and optimization."""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
