"""Exception types shared across the package."""

from __future__ import annotations


class FracRegError(Exception):
    """Base class for all errors raised by :mod:`fracreg`."""


class OrderError(FracRegError, ValueError):
    """A fractional order is outside the range an operation supports."""


class NonFiniteError(FracRegError, ValueError):
    """Input samples contain NaN or infinite values."""


class InitialValueError(FracRegError, ValueError):
    """A grid function does not vanish where an operator requires it."""


class ResolutionError(FracRegError, ValueError):
    """A grid is too coarse for the requested estimate."""


class MittagLefflerAccuracyError(FracRegError, ArithmeticError):
    """The two Mittag-Leffler evaluation branches disagree."""


class HypothesisError(FracRegError, ValueError):
    """Declared data lacks the regularity an estimate assumes."""


class SpecError(FracRegError, ValueError):
    """A problem specification file is malformed or invalid."""


class SolverError(FracRegError, RuntimeError):
    """One or more modal solves failed."""


class OutOfDomainError(FracRegError, ValueError):
    """An evaluation point lies outside the spatial or time domain."""


class QuadratureResolutionWarning(RuntimeWarning):
    """Refining the spatial quadrature changed a projected coefficient."""
