"""Error types raised across the laboratory.

Management commands map these onto exit codes: ConfigError -> 2,
MissingPrerequisite -> 3, NumericError -> 4.
"""


class SeiLabError(Exception):
    """Base class for laboratory errors."""


class ConfigError(SeiLabError, ValueError):
    """An experiment config file or section failed validation."""


class ShapeError(SeiLabError, ValueError):
    """A tensor did not have the shape an operation requires."""


class DatasetFormatError(SeiLabError, ValueError):
    """A dataset or checkpoint file is malformed."""


class MissingPrerequisite(SeiLabError, FileNotFoundError):
    """An artifact a step depends on (dataset, checkpoint) does not exist."""

    def __init__(self, message, hint=None):
        super().__init__(message)
        self.hint = hint

    def __str__(self):
        base = super().__str__()
        if self.hint:
            return f"{base}\nRun: {self.hint}"
        return base


class NumericError(SeiLabError, ArithmeticError):
    """Non-finite values appeared where checked mode forbids them."""
