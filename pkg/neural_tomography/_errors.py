# for internal use only
from __future__ import annotations

from typing import ClassVar


class TomographyError(Exception):
    """Base class of all errors raised by neural_tomography."""

    exit_code: ClassVar[int] = 2
    """Exit status used by the command-line interface when this error aborts a command."""


class UsageError(TomographyError, ValueError):
    """Invalid configuration or arguments."""

    exit_code = 1


class NumericalError(TomographyError, ArithmeticError):
    """A numerical procedure failed or produced an unphysical object."""

    exit_code = 2


class DataFormatError(TomographyError):
    """A data file is malformed."""

    exit_code = 3


# Shapes and physicality
# ======================
class InvalidDimensionError(UsageError):
    pass


class DimensionMismatchError(UsageError):
    pass


class InvalidStateError(NumericalError):
    pass


class InconsistentPovmError(NumericalError):
    pass


class InvalidChannelError(NumericalError):
    pass


# Algorithms
# ==========
class SicNotConvergedError(NumericalError):
    def __init__(self, message: str, best_deviation: float) -> None:
        super().__init__(message)
        self.best_deviation = best_deviation


class NoRealSolutionError(NumericalError):
    pass


class IntegrationError(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass


class ProbesNotCompleteError(NumericalError):
    pass


class PhaseUndefinedError(NumericalError):
    pass


class InsufficientDataError(UsageError):
    pass


class InvalidSpamError(UsageError):
    pass


class IdMismatchError(UsageError):
    pass


class PipelineStageError(TomographyError):
    """A pipeline stage failed; ``stage`` names it and ``__cause__`` holds the original error."""

    def __init__(self, stage: str, cause: BaseException) -> None:
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.exit_code = getattr(cause, "exit_code", 3 if isinstance(cause, OSError) else 2)  # type: ignore[misc]
