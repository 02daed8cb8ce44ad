"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes: usage/config problems -> 1,
data problems -> 2, numerical failures -> 3.
"""


class PicktError(Exception):
    """Base class for package errors."""


class DimensionError(PicktError):
    """Tensor shapes incompatible for an operation."""


class ParameterError(PicktError):
    """Invalid argument or hyperparameter value."""


class ConfigError(PicktError):
    """Malformed config file, unknown key, or bad CLI usage."""


class DataError(PicktError):
    """Malformed dataset input. Carries the offending file and line."""

    def __init__(self, message: str, file: str | None = None, line: int | None = None):
        self.file = file
        self.line = line
        loc = ""
        if file is not None:
            loc = f"{file}:{line}: " if line is not None else f"{file}: "
        super().__init__(loc + message)


class LeakageError(PicktError):
    """Held-out data was visible where it must not be."""


class NumericalError(PicktError):
    """Non-finite value where a finite one is required (e.g. training loss)."""
