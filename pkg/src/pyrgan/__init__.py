"""Coarse-to-fine adversarial image synthesis on Laplacian pyramids."""

__version__ = "0.1.0"
