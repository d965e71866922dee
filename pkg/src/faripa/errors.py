"""Exception hierarchy shared by all faripa modules."""


class FaripaError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(FaripaError, ValueError):
    pass


class PreconditionError(FaripaError, ValueError):
    pass


class FormatError(FaripaError, ValueError):
    """Malformed input file (PGM header, CSV layout)."""


class DegenerateDensityError(FaripaError, ValueError):
    pass


class NumericError(FaripaError, ArithmeticError):
    """Non-finite value encountered where a finite one is required."""


class InstabilityError(NumericError):
    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"simulation diverged at step {step}")


class OutOfSupportError(FaripaError, ArithmeticError):
    """All kernel weights underflowed for a regression query."""


class DegenerateRegressionError(FaripaError, ValueError):
    pass


class DegenerateDataError(FaripaError, ValueError):
    pass


class UndefinedIndexError(FaripaError, ValueError):
    pass


class DegenerateMatrixError(FaripaError, ValueError):
    pass
