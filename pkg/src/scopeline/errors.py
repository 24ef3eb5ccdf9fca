"""Exception hierarchy shared across the package."""

from __future__ import annotations


class ScopelineError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ScopelineError):
    """Invalid configuration value, file, or combination of flags."""


class MediaFormatError(ScopelineError):
    """Malformed image payload or stream manifest."""


class DataFormatError(ScopelineError):
    """Malformed data record (annotation row, results row, response box)."""


class ProtocolError(ScopelineError):
    """Violation of the framed JSON wire protocol."""


class DesyncError(ProtocolError):
    """Peer echoed the wrong frame index; the connection must be reset."""


class BackendError(ScopelineError):
    """A detector or blur-gate backend failed while handling a frame."""
