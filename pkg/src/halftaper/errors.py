"""Exception types shared across the package."""


class HalfTaperError(Exception):
    """Base class for all package errors."""


class InvalidArgument(HalfTaperError, ValueError):
    pass


class UnsupportedOrder(InvalidArgument):
    """Bessel order outside the integer / half-integer set."""


class NotPositiveDefinite(HalfTaperError, ArithmeticError):
    """Cholesky failed even after the largest allowed jitter."""


class NumericalFailure(HalfTaperError, ArithmeticError):
    """A quantity that must be nonnegative came out clearly negative."""


class ConfigError(HalfTaperError, ValueError):
    pass
