"""Exception hierarchy and the exit codes the CLI maps it onto."""

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


class WqteError(Exception):
    """Base class for every error raised by this package."""

    exit_code = EXIT_NUMERICAL


class UsageError(WqteError):
    """Bad command, flag, or configuration value."""

    exit_code = EXIT_USAGE


class ArgumentError(WqteError):
    """API called with an out-of-contract argument (e.g. tau outside (0,1))."""

    exit_code = EXIT_USAGE


class DataError(WqteError):
    exit_code = EXIT_DATA


class SchemaError(DataError):
    """Input file does not match the declared column schema."""


class ParseError(DataError):
    """A cell could not be read as a finite number."""


class DomainError(DataError):
    """A transform was applied outside its domain (e.g. log of 0)."""


class NumericalError(WqteError):
    exit_code = EXIT_NUMERICAL


class DegenerateWeightsError(NumericalError):
    """All observation weights are zero."""


class SingularDesignError(NumericalError):
    """Design matrix is rank deficient on the positive-weight rows."""


class DegenerateExposureError(NumericalError):
    """An exposure level required by the model is absent from the data."""


class SeparationError(NumericalError):
    """Perfect separation detected while fitting an exposure model."""


class BinningError(NumericalError):
    """Too few distinct values to form the requested number of bins."""


class DegenerateVarianceError(NumericalError):
    """Residual scale of the exposure model is zero."""


class TiltingError(NumericalError):
    """A custom tilting function produced a non-positive or non-finite value."""


class DegenerateArmError(NumericalError):
    """An exposure arm carries no positive weight."""


class InversionError(NumericalError):
    """CDF inversion failed; the evaluation grid does not reach the target level."""


class InstabilityError(NumericalError):
    """Too many bootstrap resamples failed to produce an estimate."""


class VarianceUndefinedError(NumericalError):
    """A plug-in variance component is zero or undefined."""
