"""Exception types shared across the package."""

from __future__ import annotations


class DomainError(ValueError):
    """An input lies outside the domain where a quantity is defined."""


class ConfigError(ValueError):
    """A configuration document violates the schema."""


class NoFixedPointError(ArithmeticError):
    """The per-cycle affine map is not a strict contraction.

    ``report`` holds the :class:`~snmod.floquet.StabilityReport` (or a tuple
    of them) that explains why.
    """

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class QuadratureError(ArithmeticError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class TrajectoryError(ArithmeticError):
    """A Monte Carlo trajectory produced a non-finite value."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step
