"""Optimal-control-relaxation diffeomorphic image registration (2D)."""

from .engine import Config, RegistrationResult, active_demons, register
from .field import BC, GridSpec
from .homotopy import CompositeKind

__all__ = [
    "BC",
    "CompositeKind",
    "Config",
    "GridSpec",
    "RegistrationResult",
    "active_demons",
    "register",
]
__version__ = "0.1.0"
