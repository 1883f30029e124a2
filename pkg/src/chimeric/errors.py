"""Exception hierarchy shared across the package.

Every domain failure derives from :class:`ChimericError` so callers (and the
CLI) can separate "bad data / bad request" from programming errors.
"""


class ChimericError(Exception):
    """Base class for all domain failures raised by this package."""


class DataFormatError(ChimericError):
    """An input file is unreadable or violates its documented schema."""


class ConfigError(ChimericError):
    """A run configuration is structurally invalid."""


class DuplicateForecastError(ChimericError):
    """Two forecasts were submitted for the same (model, target) pair."""


class NoEligibleModelsError(ChimericError):
    """An inclusion strategy removed every model from the matrix."""


class InvalidIntervalError(ChimericError):
    """A central interval has its lower bound above its upper bound."""


class DecompositionError(ChimericError):
    """A quantile level set cannot be split into median + central intervals."""


class DegenerateSampleError(ChimericError):
    """A statistical test received a sample with zero variance."""


class InsufficientDataError(ChimericError):
    """Too few observations to run the requested computation."""


class CannotImputeError(ChimericError):
    """Imputation was requested but no donor information exists."""


class MustImputeFirstError(ChimericError):
    """An operation requiring a fully present matrix saw absent cells."""


class DegenerateDistributionError(ChimericError):
    """An elicited distribution carries no probability mass on its range."""


class PartialWeekError(ChimericError):
    """Daily truth data has gaps inside a requested week."""


class ReportWriteError(ChimericError):
    """A report could not be written to the requested location."""
