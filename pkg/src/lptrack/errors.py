"""Exception types shared across the package."""


class LptrackError(Exception):
    """Base class for all package errors."""


class ParameterError(LptrackError, ValueError):
    """A parameter violates its documented constraints."""


class InputError(LptrackError, ValueError):
    """Inputs are mutually inconsistent (shape, frame range, layout)."""


class InsufficientDataError(LptrackError, ValueError):
    """Not enough samples to compute the requested statistic."""


class FitError(LptrackError, ValueError):
    """A curve fit has no usable points left."""


class ConfigError(LptrackError, ValueError):
    """A run configuration failed to parse or validate."""


class DataError(LptrackError, RuntimeError):
    """A data file is missing or corrupt; message names the file."""
