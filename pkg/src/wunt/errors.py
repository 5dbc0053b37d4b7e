"""Exception hierarchy.  Each family maps to one CLI exit code."""


class WuntError(Exception):
    exit_code = 1


class ConfigError(WuntError, ValueError):
    """Bad or unknown configuration value."""

    exit_code = 2


class DataError(WuntError, ValueError):
    """Input data violates the dataset schema (file contents, shapes, values)."""

    exit_code = 3


class DegenerateCovariateError(DataError):
    """A covariate column is constant, so it cannot be rescaled."""


class NumericalError(WuntError, ArithmeticError):
    exit_code = 4


class OverlapError(NumericalError):
    """The U-statistic denominator vanished: no control/treated pair overlaps."""


class SeparationError(NumericalError):
    """Logistic regression did not converge (typically perfect separation)."""
