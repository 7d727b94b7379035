"""Pseudo-spectral simulation and verification toolkit for damped nonlinear
waves with time-dependent damping and propagation speed on the unit box."""

from .field import SpectralField, SpectralState

__version__ = "0.1.0"

__all__ = ["SpectralField", "SpectralState", "__version__"]
