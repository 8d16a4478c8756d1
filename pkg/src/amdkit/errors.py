"""Exception types shared across the engine."""


class AmdError(Exception):
    """Base class for all engine errors."""


class UnsupportedFormat(AmdError):
    """Audio input has an unsupported sample rate or channel layout."""


class FormatError(AmdError):
    """A weight bundle is structurally invalid (bad magic, truncation, bad header)."""


class ShapeError(AmdError):
    """Tensors in a weight bundle have incompatible or unexpected shapes."""


class NonFiniteInput(AmdError):
    """An input vector contains NaN or infinity."""


class EmptySequence(AmdError):
    """A non-empty sequence of embeddings was required."""


class SessionFinalized(AmdError):
    """Audio was pushed to a session that already emitted its verdict."""


class DuplicateSession(AmdError):
    """A session id is already registered with the gateway."""


class BadParams(AmdError):
    """Session parameters violate their invariants."""


class UnknownSession(AmdError):
    """No session is registered under the given id."""


class MissingLabel(AmdError):
    """A manifest row has no usable label."""


class UnreadableFile(AmdError):
    """An audio file listed in the manifest could not be read."""
