"""Exception types shared across the package."""


class ValidationError(ValueError):
    """A parameter or input violates one of its declared invariants."""


class DatasetError(ValueError):
    """A participant dataset cannot be parsed or is unusable for estimation."""


class CalibrationError(RuntimeError):
    """Boundary calibration failed to converge or is infeasible."""


class TimeLimitError(RuntimeError):
    """A simulation exceeded its configured wall-time budget."""

    #: Verbatim message surfaced to clients when the budget is exhausted.
    MESSAGE = "reached CPU time limit"

    def __init__(self, message: str = MESSAGE):
        super().__init__(message)


class ComputationAborted(RuntimeError):
    """A computation was cancelled before completion (e.g. client disconnect)."""
