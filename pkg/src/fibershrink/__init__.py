"""Numerical engine for semi-Riemannian submersions and their canonical variation."""

__version__ = "0.1.0"
