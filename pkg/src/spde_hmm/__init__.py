"""Slow-fast parabolic SPDE simulation on a spectral Galerkin basis."""

from .kernels import BACKEND

__version__ = "0.1.0"
