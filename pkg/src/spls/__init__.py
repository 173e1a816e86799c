"""Saddle point least squares flux approximation for elliptic interface problems."""

__version__ = "0.1.0"
