"""Exception hierarchy shared by every stfactor module."""

from __future__ import annotations


class StfactorError(RuntimeError):
    """Base class for errors raised by the library."""


class ShapeError(StfactorError, ValueError):
    """Tensor extents are invalid or incompatible with an operation."""


class RangeError(StfactorError, ValueError):
    """A scalar range argument is empty or inverted."""


class UsageError(StfactorError):
    """Caller asked for something that does not exist or is inconsistent."""


class DataError(StfactorError):
    """Input data violates a content rule (labels, durations, alignment)."""


class FormatError(DataError):
    """A file does not follow its binary or textual layout."""


class ArithmeticDomainError(StfactorError, ArithmeticError):
    """A computation would divide by zero or leave its domain."""


class TrainingAborted(StfactorError):
    """Optimization stopped because of non-finite values or I/O failure."""

    def __init__(self, message: str, history: list | None = None) -> None:
        super().__init__(message)
        self.history = history or []


class InvariantViolation(StfactorError):
    """Internal construction bug: an invariant that must always hold did not."""
