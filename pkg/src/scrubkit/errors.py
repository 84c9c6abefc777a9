"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class ScrubkitError(Exception):
    """Base class for all toolkit errors."""


class FormatError(ScrubkitError):
    """Malformed input file (TSV, m2, JSON lines)."""


class ValidationError(ScrubkitError):
    """Structurally valid input that violates a contract."""


class NumericalError(ScrubkitError):
    """A linear system that cannot be solved reliably."""


class TransportError(ScrubkitError):
    """Completion endpoint failure after the retry policy is exhausted."""


class TransientTransportError(TransportError):
    """Retryable endpoint failure; may carry a server retry-after hint."""

    def __init__(self, message: str, retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class EmptyCompletionError(ScrubkitError):
    """The endpoint returned an empty completion; callers keep the input."""
