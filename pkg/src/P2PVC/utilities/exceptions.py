"""
Exception hierarchy shared by every P2PVC module.

Validation errors describe bad input (files, scenarios, arguments) and map to CLI exit code 1.
Numerical errors describe solver failures on otherwise valid input and map to CLI exit code 2.
"""
from typing import Any, Optional


class P2PVCError(Exception):
    """Root of all P2PVC errors."""


class ValidationError(P2PVCError):
    """Input does not satisfy a documented precondition."""


class NumericalError(P2PVCError):
    """A numerical method failed on valid input."""


class CycleDetected(ValidationError):
    pass


class Disconnected(ValidationError):
    pass


class MissingSlack(ValidationError):
    pass


class MultipleSlack(ValidationError):
    pass


class DuplicateNode(ValidationError):
    pass


class NonPositiveImpedance(ValidationError):
    pass


class UnknownNode(ValidationError):
    pass


class UnknownKey(ValidationError):
    pass


class AlreadyPerUnit(ValidationError):
    pass


class NotPerUnit(ValidationError):
    pass


class UnknownDer(ValidationError):
    pass


class InvalidEpsilon(ValidationError):
    pass


class RatingExceeded(ValidationError):
    pass


class NodeSetMismatch(ValidationError):
    pass


class IsolatedAgent(ValidationError):
    pass


class EmptyProfile(ValidationError):
    pass


class InvalidScenario(ValidationError):
    pass


class SchemaMismatch(ValidationError):
    pass


class NonConvergence(NumericalError):
    """
    The backward/forward sweep hit its iteration cap.

    Parameters:
    - message (str): Description of the failure.
    - iterations (int): Sweeps performed before giving up.
    - residual (float): Largest voltage change of the last sweep (pu).
    """

    def __init__(self, message: str, iterations: int = 0, residual: float = float("nan")) -> None:
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class ComplexVoltage(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class PowerFlowDiverged(NumericalError):
    """
    The simulation could not solve the grid at some instant and stopped.

    Parameters:
    - time_s (float): Absolute simulated time of the failed solve (s).
    - partial_result (Any): Rows recorded before the failure (a TimeSeriesResult).
    """

    def __init__(self, time_s: float, partial_result: Optional[Any] = None) -> None:
        super().__init__(f"power flow diverged at t={time_s:.1f} s")
        self.time_s = time_s
        self.partial_result = partial_result


class ResultIoError(P2PVCError, OSError):
    pass
