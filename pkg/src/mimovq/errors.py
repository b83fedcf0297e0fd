"""Exception hierarchy shared by every module.

The CLI maps each family onto a process exit code, so library code raises
the most specific class it can.
"""


class MimoVQError(Exception):
    """Base class for all package errors."""


class ShapeError(MimoVQError, ValueError):
    """Tensor or model geometry does not line up."""


class ConfigError(MimoVQError, ValueError):
    """Invalid configuration value, unknown key or unknown profile name."""


class FormatError(MimoVQError, ValueError):
    """A binary file failed validation (magic, version, truncation)."""


class NumericError(MimoVQError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class TrainingError(NumericError):
    """Training diverged; ``epoch`` records where."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


class StateError(MimoVQError, RuntimeError):
    """An object was used in a state that forbids the call (e.g. a spent tape)."""


class ContractError(MimoVQError, ValueError):
    """A caller broke a documented precondition (non-scalar loss, missing aux)."""


class DegenerateInputError(MimoVQError, ValueError):
    """Input carries no information for the requested statistic (zero variance)."""
