"""Adaptive lowest-order virtual elements on tetrahedral meshes with hanging nodes."""

__version__ = "0.1.0"
