"""Exception hierarchy shared by all modules."""
from __future__ import annotations


class HaarError(Exception):
    """Base class for errors raised by this package."""


class InputError(HaarError, ValueError):
    """Malformed or inconsistent input data."""


class PartitionError(InputError):
    """The proposed classes do not partition the point space."""

    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = point


class ValidationError(HaarError, ValueError):
    """A mathematical hypothesis required by an operation does not hold."""

    def __init__(self, message: str, check: str = "", witness=None, residual: float | None = None):
        super().__init__(message)
        self.check = check
        self.witness = witness
        self.residual = residual


class NotNormalizedError(ValidationError):
    """A potential is not Haar-normalized within tolerance."""


class ConvergenceError(HaarError, RuntimeError):
    """An iterative solver ran out of iterations."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
