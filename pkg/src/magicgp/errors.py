"""Error types with process exit categories for the command line layer."""

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class MagicError(Exception):
    """Base class for package errors; ``exit_code`` drives the CLI status."""

    exit_code = EXIT_USAGE


class ConfigError(MagicError):
    """Bad configuration: unknown keys, out-of-range values, bad flag values."""

    exit_code = EXIT_USAGE


class InvalidParameterError(MagicError, ValueError):
    """A parameter or argument violates its documented invariants."""

    exit_code = EXIT_USAGE


class DomainError(InvalidParameterError):
    """An evaluation point lies outside the supported domain."""


class DataError(MagicError):
    """Malformed or degenerate input data."""

    exit_code = EXIT_DATA


class IngestError(DataError):
    """CSV ingestion failure; the message names the file and line number."""


class DegenerateLabelsError(DataError):
    """Training labels do not contain both classes."""


class MetricError(DataError):
    """A metric is undefined on the given inputs."""


class CheckpointError(DataError):
    """Unreadable, truncated, or inconsistent model checkpoint."""


class UnsupportedVersionError(CheckpointError):
    """Checkpoint format version is newer than this package supports."""


class NumericalError(MagicError):
    """Numerical failure in linear algebra or optimization."""

    exit_code = EXIT_NUMERICAL


class SingularMatrixError(NumericalError):
    """Factorization failed even after the maximum diagonal jitter."""


class OptimizerFailure(NumericalError):
    """Bounded quasi-Newton search could not produce a finite result."""
