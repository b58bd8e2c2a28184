"""Robust estimation of affine images of the hypercube from corrupted samples."""

__version__ = "0.1.0"
