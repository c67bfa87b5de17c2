"""
Exception hierarchy for VoltGrid.
"""
from typing import Optional, Tuple


class VoltGridError(Exception):
    """Base class for all VoltGrid errors."""


class FeederFormatError(VoltGridError):
    """Feeder file could not be parsed."""


class FeederValidationError(VoltGridError, ValueError):
    """Feeder data violates a model invariant."""


class ProfileFormatError(VoltGridError):
    """Profile CSV could not be parsed."""


class ProfileValidationError(VoltGridError, ValueError):
    """Profile data violates a model invariant."""


class ChainSpecError(VoltGridError, ValueError):
    """Markov chain specification is invalid."""


class PowerFlowError(VoltGridError):
    """Power flow evaluation failed."""


class ConvergenceError(PowerFlowError):
    """Backward-forward sweep did not converge."""


class InfeasibleOperatingPointError(PowerFlowError):
    """Squared voltage dropped to zero or below during the sweep."""


class SolverError(VoltGridError):
    """Fast-timescale solver failed."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class SlotSolveError(VoltGridError):
    """Solver or power flow failure tagged with its (tau, t) slot."""

    def __init__(self, message: str, tau: int, t: Optional[int] = None):
        where = f"tau={tau}" if t is None else f"tau={tau}, t={t}"
        super().__init__(f"{message} [{where}]")
        self.tau = tau
        self.t = t

    @property
    def slot(self) -> Tuple[int, Optional[int]]:
        return self.tau, self.t


class AgentDivergenceError(VoltGridError):
    """Q-network training produced a non-finite loss."""


class TraceError(VoltGridError):
    """Trace directory is missing files or holds malformed data."""
