"""Numerical toolkit for planar steady Euler flows without stagnation points."""

__version__ = "0.1.0"
