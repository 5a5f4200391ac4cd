from enum import IntEnum
from pathlib import Path


class ExitCodeEnum(IntEnum):
    """Process exit codes returned by the command-line interface.

    Members:
        SUCCESS: The command completed.
        INPUT_ERROR: Invalid values, shapes or missing files.
        PARSE_ERROR: A CSV or JSON file could not be parsed.
        STATE_ERROR: An object was used before it was ready (e.g. uncalibrated).
        TRAINING_ERROR: Training diverged.
        CONFIGURATION_ERROR: Settings are invalid or incomplete.
    """

    SUCCESS = 0
    INPUT_ERROR = 3
    PARSE_ERROR = 4
    STATE_ERROR = 5
    TRAINING_ERROR = 6
    CONFIGURATION_ERROR = 7


class ConformalKitError(Exception):
    """Base class for every error raised by conformalkit."""

    exit_code: ExitCodeEnum = ExitCodeEnum.INPUT_ERROR


class InputError(ConformalKitError, ValueError):
    """An argument or input file violates its contract."""

    exit_code = ExitCodeEnum.INPUT_ERROR


class ParseError(InputError):
    """A data file is malformed.

    Attributes:
        path (Path): The offending file.
        line (int | None): The 1-based line number, when known.
    """

    exit_code = ExitCodeEnum.PARSE_ERROR

    def __init__(self, path: Path, reason: str, line: int | None = None) -> None:
        """Initialize the ParseError.

        Args:
            path (Path): The offending file.
            reason (str): What went wrong.
            line (int, optional): The 1-based line number. Defaults to None.
        """
        self.path = path
        self.line = line
        location = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{location}: {reason}")


class StateError(ConformalKitError, RuntimeError):
    """An object is not in the state required by the requested operation."""

    exit_code = ExitCodeEnum.STATE_ERROR


class TrainingError(ConformalKitError, RuntimeError):
    """Training produced a non-finite loss.

    Attributes:
        epoch (int): The 0-based epoch in which the loss diverged.
    """

    exit_code = ExitCodeEnum.TRAINING_ERROR

    def __init__(self, epoch: int, loss_value: float) -> None:
        """Initialize the TrainingError.

        Args:
            epoch (int): The 0-based epoch in which the loss diverged.
            loss_value (float): The offending loss value.
        """
        self.epoch = epoch
        super().__init__(f"Training diverged at epoch {epoch}: loss={loss_value}")


class ConfigurationError(ConformalKitError, ValueError):
    """Settings are structurally invalid or incompatible with the request."""

    exit_code = ExitCodeEnum.CONFIGURATION_ERROR
