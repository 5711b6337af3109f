"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class FracRelaxError(Exception):
    """Base class for all errors raised by the package."""


class PreconditionError(FracRelaxError, ValueError):
    """An input violates a documented precondition."""


class OutOfRangeError(FracRelaxError, OverflowError):
    """The result is not representable in double precision."""


class AccuracyError(FracRelaxError, ArithmeticError):
    """A series or quadrature could not reach the requested accuracy."""


class GridTooCoarseError(PreconditionError):
    pass


class InvertibilityError(FracRelaxError, ValueError):
    """An operator that must be invertible is singular or ill-conditioned."""


class ContractionError(FracRelaxError, RuntimeError):
    """Successive approximation did not converge."""

    def __init__(self, message: str, last_update: float) -> None:
        super().__init__(message)
        self.last_update = last_update


class BoundUnavailableError(FracRelaxError, ValueError):
    """The a-priori bound cannot be formed for the given data."""


class UnsupportedDimensionError(FracRelaxError, ValueError):
    pass


class DomainError(FracRelaxError, ValueError):
    """A point lies outside the domain of a function (e.g. outside a hull)."""


class SchemaError(FracRelaxError, ValueError):
    """A problem file does not match the documented schema."""


class HypothesisError(FracRelaxError, ValueError):
    """Problem data violates one of the standing hypotheses (H1)-(H4)."""
