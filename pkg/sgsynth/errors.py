"""Exception hierarchy for the simulator.

Every error carries a human-readable ``detail`` and the process exit code
that the command-line handler maps it to.
"""
from typing import Optional


class SimulatorError(Exception):
    """Base error for all expected failures."""

    exit_code = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ConfigError(SimulatorError):
    """Invalid or inconsistent configuration document."""

    exit_code = 2


class DataError(SimulatorError):
    """Input data that violates a documented schema or precondition."""

    exit_code = 3

    def __init__(self, detail: str, row: Optional[int] = None, column: Optional[str] = None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column '{column}'")
        if location:
            detail = f"{detail} ({', '.join(location)})"
        super().__init__(detail)
        self.row = row
        self.column = column


class InvalidInputError(DataError, ValueError):
    """Rejected argument of a pure operation (out-of-range probability, etc.)."""


class CycleError(InvalidInputError):
    """The graph contains a directed cycle."""


class ImpossibleEvidenceError(DataError):
    """Evidence has zero probability under the network."""


class NumericalFailureError(SimulatorError):
    """A numerical routine produced a non-finite quantity."""

    exit_code = 4

    def __init__(self, detail: str, iteration: Optional[int] = None):
        if iteration is not None:
            detail = f"{detail} (iteration {iteration})"
        super().__init__(detail)
        self.iteration = iteration


class PartialGridError(SimulatorError):
    """Some robustness-grid cells failed; the rest were written."""

    exit_code = 5


class PipelineStageError(SimulatorError):
    """Wraps a sub-module failure with the pipeline stage it happened in."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {getattr(cause, 'detail', str(cause))}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
