"""Exception types raised across the package."""


class MaglocError(Exception):
    """Base class for all package errors."""


class IndexDomainError(MaglocError, ValueError):
    """Harmonic degree/order outside the valid range."""


class CapabilityError(MaglocError, ValueError):
    """Request exceeds what the implementation supports."""


class ShapeError(MaglocError, ValueError):
    """Array shapes do not line up."""


class NumericDegeneracyError(MaglocError, ArithmeticError):
    pass


class SingularityError(MaglocError, ArithmeticError):
    """Kernel evaluated at (or too close to) its singular point."""


class DomainError(MaglocError, ValueError):
    pass


class EmptyApertureError(MaglocError, ValueError):
    pass


class NeedsQuadratureError(MaglocError, ValueError):
    """Full-sphere integration requested on data without quadrature weights."""


class DegeneratePointError(MaglocError, ValueError):
    pass


class DegenerateDataError(MaglocError, ArithmeticError):
    """The measurement carries no usable anomaly signal (P vanishes)."""


class DivergenceDomainError(MaglocError, ValueError):
    pass


class DegenerateSystemError(MaglocError, ArithmeticError):
    pass


class IllConditionedFitError(MaglocError, ArithmeticError):
    def __init__(self, message, condition=float("nan")):
        super().__init__(message)
        self.condition = condition


class ConfigError(MaglocError, ValueError):
    pass
