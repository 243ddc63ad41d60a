"""Hybrid finite-element / convolutional-network solver for 2D phase-field fracture."""

__version__ = "0.1.0"
