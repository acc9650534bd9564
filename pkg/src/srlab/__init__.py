"""Numerical laboratory for sub-Riemannian geodesics and the regularity of their controls."""

__version__ = "0.1.0"
