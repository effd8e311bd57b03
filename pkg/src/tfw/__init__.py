"""Temporal feature weaving for clip-level viewpoint classification."""

__version__ = "0.1.0"
