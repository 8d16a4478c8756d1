"""Converts trained checkpoints into engine weight bundles and generates
float64 oracle fixtures for the engine's test suite."""

from .errors import ExportError, MissingLayer, ShapeMismatch

__version__ = "0.1.0"

__all__ = ["ExportError", "MissingLayer", "ShapeMismatch", "__version__"]
