"""Exporter error types."""


class ExportError(Exception):
    """Base class for conversion failures."""


class MissingLayer(ExportError):
    """The checkpoint lacks a layer the target architecture requires."""


class ShapeMismatch(ExportError):
    """A checkpoint tensor does not have the dimensions the engine expects."""
