"""Exception types shared across the package."""


class ForecastError(Exception):
    """Base class for all package errors."""


class DimensionError(ForecastError, ValueError):
    """Raised when tensor shapes do not conform."""


class OracleError(ForecastError, ArithmeticError):
    """Raised when a finite-difference probe evaluates to a non-finite value."""


class DataError(ForecastError, ValueError):
    """Raised for unusable input data (parse failures, degenerate series, too short)."""


class TrainingDivergence(ForecastError, ArithmeticError):
    """Raised when a loss or gradient becomes non-finite during training."""


class NonFiniteError(ForecastError, FloatingPointError):
    """Raised in debug mode when an op produces NaN or inf."""


class ConfigError(ForecastError, ValueError):
    """Raised when an experiment configuration fails validation.

    ``problems`` holds every individual complaint so they can be reported at once.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
