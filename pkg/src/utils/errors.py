#
# file: src/utils/errors.py
#
from typing import Optional


class TapeError(Exception):
    """Root of every error raised by the audit toolkit."""


class ShapeError(TapeError, ValueError):
    pass


class ArgumentError(TapeError, ValueError):
    pass


class ConfigError(TapeError):
    pass


class MissingConfigError(ConfigError):
    """The named config file does not exist; the CLI exits with code 1."""

    def __init__(self, path: str):
        self.path = path
        super().__init__(f"config file not found: {path}")


class UsageError(TapeError):
    """Bad command line; the CLI exits with code 1."""


class NumericalError(TapeError, ArithmeticError):
    pass


class DivergenceError(NumericalError):
    """A loss became non-finite during optimization."""

    def __init__(
        self,
        epoch: int,
        restart: Optional[int] = None,
        step: Optional[int] = None,
        what: str = "loss",
    ):
        self.epoch = epoch
        self.restart = restart
        self.step = step
        where = f"epoch {epoch}"
        if restart is not None:
            where = f"restart {restart}, step {step}"
        super().__init__(f"{what} diverged to a non-finite value at {where}")


class DegenerateWeightsError(NumericalError):
    pass


class UndefinedSimilarityError(NumericalError):
    pass


class IdxParseError(TapeError):
    pass


class BadMagicError(IdxParseError):
    pass


class TruncatedPayloadError(IdxParseError):
    pass


class CountMismatchError(IdxParseError):
    pass


class StageError(TapeError):
    """Wraps any failure inside an audit pipeline stage."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
