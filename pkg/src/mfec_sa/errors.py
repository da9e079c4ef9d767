"""Exception types shared across the package."""

from __future__ import annotations


class MFECError(Exception):
    """Base class for every error raised by mfec_sa."""


class ConfigError(MFECError, ValueError):
    """Invalid hyperparameter or configuration value.

    ``key`` names the offending setting when one is known.
    """

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class InputError(MFECError, ValueError):
    """Malformed argument: wrong dimension, non-finite value, bad index."""


class StateError(MFECError, RuntimeError):
    """Operation not legal in the object's current state."""


class FormatError(MFECError, ValueError):
    """Unreadable serialized data.

    ``offset`` is a byte offset for binary snapshots; ``line`` a 1-based line
    number for CSV input.
    """

    def __init__(self, message: str, offset: int | None = None, line: int | None = None):
        where = []
        if offset is not None:
            where.append(f"offset {offset}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.offset = offset
        self.line = line


class OutputError(MFECError, OSError):
    """A results file or directory could not be read or written."""
