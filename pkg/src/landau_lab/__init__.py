"""Spectral laboratory for the linear Landau equation with soft potential."""

__version__ = "0.1.0"
