"""Simulation and verification toolkit for boundary-forced wave equations
driven by heavy-tailed Levy noise."""

from ._backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
