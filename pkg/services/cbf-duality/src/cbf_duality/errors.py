"""Exception hierarchy for cbf-duality.

Argument problems subclass ValueError so callers may catch them generically;
failures of the numerical machinery share NumericalError so the CLI can map
them to a single exit status.
"""


class CbfDualityError(Exception):
    """Base class for all package errors."""


class DomainError(CbfDualityError, ValueError):
    """Argument outside the domain of an operation."""


class UnsupportedFamilyError(CbfDualityError, ValueError):
    """Operation not available for the requested family."""


class NumericalError(CbfDualityError, RuntimeError):
    """Numerical machinery failed to deliver a trustworthy value."""


class SeriesDivergenceError(NumericalError):
    """Alternating stable series failed its truncation guard."""


class ContinuationError(NumericalError):
    """Newton continuation for the inverse of F stalled or left the upper half-plane."""


class QuadratureError(NumericalError):
    """Adaptive quadrature did not reach the requested accuracy."""


class ExtrapolationError(NumericalError):
    """Richardson extrapolation on the y-ladder was unstable."""


class DegenerateCellError(CbfDualityError):
    """Monte Carlo cell with too few hits to estimate a standard error."""

    def __init__(self, message: str, hits: int):
        super().__init__(message)
        self.hits = hits
