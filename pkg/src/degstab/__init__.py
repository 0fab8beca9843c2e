"""Superexponential stabilization of degenerate parabolic equations with bilinear control."""

__version__ = "0.1.0"
