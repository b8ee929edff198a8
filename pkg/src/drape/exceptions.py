from __future__ import annotations

from typing import Any, Hashable, List, Optional


class DrapeError(Exception):
    pass


class ConfigurationError(DrapeError):
    """Raised when a scenario or its parameters are invalid."""


class ValidationError(DrapeError):
    pass


class SolverError(DrapeError):
    pass


class LinearDependenceError(SolverError):
    """The reduced system became singular when adding *row*."""

    def __init__(self, message: str, row: Optional[Hashable] = None) -> None:
        super().__init__(message)
        self.row = row


class CyclingError(SolverError):
    def __init__(self, message: str, visited: Optional[List[Any]] = None) -> None:
        super().__init__(message)
        self.visited = visited or []


class IterationLimitError(SolverError):
    pass


class ConvergenceError(SolverError):
    pass


class StepFailure(DrapeError):
    """A time step could not be completed.

    The partial report (and the frame index when raised while running a
    scenario) are attached for diagnostics.
    """

    def __init__(self, message: str, report: Any = None, frame: Optional[int] = None) -> None:
        super().__init__(message)
        self.report = report
        self.frame = frame
        self.trace: Any = None


class BenchmarkInvalid(DrapeError):
    def __init__(self, message: str, deviation: float) -> None:
        super().__init__(message)
        self.deviation = deviation
