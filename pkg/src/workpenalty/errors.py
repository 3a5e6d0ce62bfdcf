"""Exception types raised across the package."""


class WorkPenaltyError(Exception):
    """Base class for all errors raised by workpenalty."""


class DimMismatch(WorkPenaltyError, ValueError):
    pass


class NonHermitian(WorkPenaltyError, ValueError):
    pass


class NotADensityMatrix(WorkPenaltyError, ValueError):
    """Raised when a matrix fails a density-matrix check.

    ``clause`` is one of ``"hermiticity"``, ``"trace"`` or ``"positivity"``.
    """

    def __init__(self, clause: str, detail: str = ""):
        self.clause = clause
        super().__init__(f"{clause}: {detail}" if detail else clause)


class ConvergenceFailure(WorkPenaltyError, RuntimeError):
    pass


class DomainError(WorkPenaltyError, ValueError):
    pass


class ThermoOverflow(WorkPenaltyError, OverflowError):
    pass


class OutOfRange(WorkPenaltyError, ValueError):
    pass


class StepTooLarge(WorkPenaltyError, RuntimeError):
    pass


class DegenerateSpectrum(WorkPenaltyError, ValueError):
    pass


class NotDiagonal(WorkPenaltyError, ValueError):
    pass


class ParseError(WorkPenaltyError, ValueError):
    pass


class ConfigValidationError(WorkPenaltyError, ValueError):
    pass
