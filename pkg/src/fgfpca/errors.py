"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, NumericalError -> 4.
"""


class FgfpcaError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(FgfpcaError):
    """Invalid option values or inconsistent configuration."""


class DataError(FgfpcaError):
    """Malformed or unsupported input data."""


class NumericalError(FgfpcaError):
    """A numerical procedure failed or produced a degenerate result."""


class StageError(NumericalError):
    """Failure inside one pipeline stage, annotated with the stage name."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"{stage}: {message}")
