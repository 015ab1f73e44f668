"""Exception hierarchy shared by all modules."""


class FcountError(Exception):
    """Base class for all library errors."""


class DomainError(FcountError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class RangeError(FcountError, ArithmeticError):
    """An argument lies outside the range where evaluation is reliable."""


class SeriesError(FcountError, ArithmeticError):
    """A series failed to reach its tolerance within the allowed number of terms."""


class ShapeError(FcountError, ValueError):
    """Grid or array shape does not satisfy an operation's requirements."""


class QuadratureError(FcountError, ArithmeticError):
    """Numerical integration did not converge."""


class UnreachableMassError(FcountError, ValueError):
    """A cumulative rate never reaches the requested mass."""


class AmbiguityError(FcountError, ValueError):
    """A cumulative rate is flat at the requested mass, so its inverse is not unique."""


class RefinementError(FcountError, ArithmeticError):
    """A time-stepping scheme produced invalid values; a finer grid is needed."""
