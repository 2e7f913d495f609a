"""Benchmark construction and evaluation for occlusion-aware single-image 3D reconstruction."""

__version__ = "0.1.0"


class OccbenchError(ValueError):
    """Base class for all input/contract errors raised by this package."""


class EmptyResultError(OccbenchError):
    """Raised when an operation ends with nothing to emit (e.g. every sample filtered)."""
