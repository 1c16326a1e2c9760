"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract: usage errors exit 1,
data errors exit 2, numeric failures exit 3.
"""


class AccentLabError(Exception):
    """Base class for all package errors."""


class UsageError(AccentLabError):
    """Bad command-line arguments or malformed invocation."""


class DataError(AccentLabError):
    """Invalid input data: manifests, audio files, annotations, configs."""


class NumericError(AccentLabError):
    """Numeric failure: non-finite losses, failed self checks."""


class InfeasibleTargetError(NumericError):
    """CTC target cannot be aligned to the available number of frames."""
