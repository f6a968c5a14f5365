"""Numerical laboratory for chiral bimerons on the disk and the torus."""

__version__ = "0.1.0"
