"""Numerical laboratory for skew-product semiflows of scalar parabolic equations on the circle."""

__version__ = "0.1.0"
