"""
Exception hierarchy for Joint Cache Lab.

Every error derives from a builtin family (ValueError, RuntimeError,
IndexError) and from JclError, so callers can catch either.
"""

from typing import Optional


class JclError(Exception):
    """Base mixin for all lab errors."""


class ConfigError(JclError, ValueError):
    """Invalid generator parameters, cache geometry or run configuration."""


class TraceParseError(JclError, ValueError):
    """Malformed trace row."""

    def __init__(self, message: str, line: int, column: Optional[str] = None):
        self.line = line
        self.column = column
        where = f" (column '{column}')" if column else ""
        super().__init__(f"{message} at line {line}{where}")


class TraceValidationError(JclError, ValueError):
    """Trace rows parsed but violate a trace invariant."""

    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"{message} at line {line}")


class SimulationFault(JclError, RuntimeError):
    """A policy or prefetcher broke the simulator contract."""

    def __init__(self, message: str, event_index: int):
        self.event_index = event_index
        super().__init__(f"{message} (event {event_index})")


class OracleLimitError(JclError, ValueError):
    """Exhaustive search refused because the instance is too large."""


class DataIntegrityError(JclError, RuntimeError):
    """Labels, events or files that should agree do not."""


class BoundsError(JclError, IndexError):
    """Token id or class index outside its table."""


class ShapeError(JclError, ValueError):
    """Array dimensions do not match."""


class NumericDomainError(JclError, ValueError):
    """Input outside the domain of a numeric function."""


class CheckpointFormatError(JclError, ValueError):
    """Checkpoint bytes are not a valid JCL1 stream."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} at byte offset {offset}")


class AlignmentError(JclError, ValueError):
    """Replacement and prefetch views do not describe the same event."""


class SplitError(JclError, ValueError):
    """Dataset too small for a chronological split."""
