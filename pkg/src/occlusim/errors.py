"""Exception types raised across the toolkit."""


class OcclusimError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(OcclusimError, ValueError):
    """An occlusion parameter is outside its valid range or of the wrong shape."""


class UnsupportedPresetError(ParameterError):
    """A severity preset was requested for a kind that has no preset mapping."""


class ShapeError(OcclusimError, ValueError):
    """Array dimensions do not match what the operation requires."""


class InputError(OcclusimError, ValueError):
    """Input data violates a structural precondition (missing sensors, schema mismatch)."""


class MalformedFileError(OcclusimError, ValueError):
    """A file's bytes do not parse under its declared format."""


class UnsupportedFormatError(OcclusimError, ValueError):
    """The file parses but uses a format variant the toolkit does not handle."""


class DecodeError(OcclusimError, ValueError):
    """An image byte stream could not be decoded."""


class PathError(OcclusimError, ValueError):
    """A relative path is absolute, escapes its root, or is otherwise unsafe."""


class PairingError(OcclusimError, ValueError):
    """Two dataset trees that must mirror each other do not."""


class UsageError(OcclusimError, ValueError):
    """A job configuration or command invocation is invalid."""
