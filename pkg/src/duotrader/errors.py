"""Exception hierarchy shared across the package."""


class DuotraderError(Exception):
    """Base class for all package errors."""


class InsufficientDataError(DuotraderError):
    """Not enough observations to perform the requested operation."""


class InvalidInputError(DuotraderError):
    """Input values violate a precondition (non-positive price, NaN, ...)."""


class ParameterError(DuotraderError):
    """A configuration or model parameter is out of its valid range."""


class DataOrderingError(DuotraderError):
    """Timestamps for a symbol are not strictly increasing."""


class DataAlignmentError(DuotraderError):
    """Series that must share a common calendar do not line up."""


class NumericalError(DuotraderError):
    """A linear solve or likelihood computation broke down numerically."""


class TrainingDivergedError(DuotraderError):
    """Network training produced a non-finite loss."""


class ConfigError(DuotraderError):
    """Run configuration failed to parse or validate."""
