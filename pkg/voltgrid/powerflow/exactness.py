"""
Exactness certificate for the second-order cone relaxation.
"""
import logging
from dataclasses import dataclass

import numpy as np

from voltgrid.config import EXACTNESS_TOL
from voltgrid.feeder.feeder_model import FeederModel
from voltgrid.powerflow.flow_state import FlowState

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExactnessReport:
    """Per-line gaps v_parent * ell - (P^2 + Q^2)."""
    gaps: np.ndarray
    max_gap: float
    min_gap: float
    worst_line: int
    feasible: bool
    exact: bool


def certify_soc_exactness(model: FeederModel, state: FlowState, tol: float = EXACTNESS_TOL) -> ExactnessReport:
    """
    Check whether the relaxed current equations hold with equality.

    Args:
        model: Feeder
        state: Solution of the relaxed problem
        tol: Gap tolerance

    Returns:
        ExactnessReport; exact is True when the largest gap is at most tol,
        feasible is True when no gap is below -tol
    """
    v_parent = state.parent_voltages(model.parent)
    gaps = v_parent * state.ell - (state.P ** 2 + state.Q ** 2)
    worst = int(np.argmax(gaps))
    report = ExactnessReport(
        gaps=gaps,
        max_gap=float(gaps[worst]),
        min_gap=float(gaps.min()),
        worst_line=worst + 1,
        feasible=bool(gaps.min() >= -tol),
        exact=bool(gaps[worst] <= tol),
    )
    if not report.exact:
        logger.warning(f"Relaxation not exact: gap {report.max_gap:.3e} on line into bus {report.worst_line}")
    return report
