"""Exception types shared across the package."""


class KvRecallError(Exception):
    """Base class for all package errors."""


class ConfigError(KvRecallError, ValueError):
    """Invalid configuration or argument values."""


class TraceError(KvRecallError):
    """A trace or run log could not be parsed.

    ``line`` is the 1-based line number of the offending record when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FrameError(KvRecallError, ValueError):
    """A streamed frame is inconsistent with the stream (order, shapes, layers)."""


class StoreError(KvRecallError):
    """Illegal operation on the KV store (duplicate id, dead id, anchor deletion)."""


class InvariantError(KvRecallError, AssertionError):
    """An internal invariant was violated; indicates a bug, not bad input."""
