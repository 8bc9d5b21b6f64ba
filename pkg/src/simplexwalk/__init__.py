"""Simulation and verification tools for the Beta resampling walk on the simplex."""

__version__ = "0.1.0"
