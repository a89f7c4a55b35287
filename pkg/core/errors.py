"""Exception hierarchy for the lab. Library code raises, the command layer maps to exit codes."""

from typing import Any, List, Optional, Tuple


class LabError(Exception):
    """Base class for every error raised by the lab."""

    exit_code = 1


class ParameterError(LabError):
    exit_code = 2


class DomainError(LabError):
    exit_code = 2


class ResolutionError(LabError):
    exit_code = 2


class InvalidConfigError(LabError):
    exit_code = 2

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


class ReconstructionError(LabError):
    """Newton inversion of the reformulated unknowns did not converge."""

    def __init__(self, message: str, index: Optional[Tuple[int, ...]] = None):
        super().__init__(message)
        self.index = index


class AdmissibilityError(LabError):
    pass


class DegenerateFractionError(LabError):
    pass


class BlowUpError(LabError):
    """State left the admissible set. Carries the last valid trajectory."""

    def __init__(self, message: str, time: float, trajectory: Any = None):
        super().__init__(f"{message} (t={time:.6g})")
        self.reason = message
        self.time = time
        self.trajectory = trajectory

    def __reduce__(self):
        return type(self), (self.reason, self.time, self.trajectory)


class SamplingError(LabError):
    pass


class RangeError(LabError):
    pass


class ShapeError(LabError):
    pass


class PreconditionError(LabError):
    pass


class UnsupportedRegimeError(LabError):
    pass


class SweepError(LabError):
    """Some sweep runs failed; `report` holds what finished."""

    def __init__(self, message: str, report: Any = None, failed: Optional[List[str]] = None):
        super().__init__(message)
        self.report = report
        self.failed = failed or []
