"""Curvature analysis of plane fields orthogonal to a vector field in R^3."""

__version__ = "0.1.0"
