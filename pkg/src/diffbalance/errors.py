"""Exception types shared across the package."""


class DiffBalanceError(Exception):
    """Base class for all package errors."""


class DimensionError(DiffBalanceError):
    """Array shapes are incompatible with the requested operation."""


class NumericError(DiffBalanceError):
    """A non-finite value appeared where finite math was required."""


class ScheduleError(DiffBalanceError):
    """Invalid noise-schedule parameters."""


class StepError(DiffBalanceError):
    """Diffusion step index outside [1, T]."""


class SpecError(DiffBalanceError):
    """Invalid dataset/mixture specification."""


class StratifyError(DiffBalanceError):
    """A class is too small to split into train/val/test."""


class ParseError(DiffBalanceError):
    """Malformed on-disk file."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class ConfigError(DiffBalanceError):
    """Bad run configuration (unknown key, invalid value, missing input)."""


class DivergenceError(DiffBalanceError):
    """Training loss blew up."""
