"""
Single-timescale baseline: relax the capacitor commitment to [0, 1], solve
the joint box QP over (q_r, y) on the linear model, round y and re-solve q_r.
"""
import logging
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from voltgrid.config import ENUMERATION_LIMIT, ROUNDING_THRESHOLD
from voltgrid.convexopt.box_qp import solve_box_qp
from voltgrid.convexopt.problem import (
    SlotData,
    SolveReport,
    active_inverters,
    assemble_qp,
    qp_from_affine_map,
    slot_injections,
)
from voltgrid.drl.actions import Action, action_from_y, all_actions
from voltgrid.feeder.feeder_model import FeederModel
from voltgrid.powerflow.lindistflow import Sensitivity

logger = logging.getLogger(__name__)


def round_commitment(y_relaxed: np.ndarray, threshold: float = ROUNDING_THRESHOLD) -> np.ndarray:
    """Round a relaxed commitment; values equal to the threshold round up."""
    return (np.asarray(y_relaxed) >= threshold).astype(int)


def enumerate_capacitor_actions(model: FeederModel, sens: Sensitivity, slot: SlotData) -> pd.DataFrame:
    """
    Solve the slot QP for every capacitor commitment.

    Args:
        model: Feeder
        sens: Sensitivity matrices of the feeder
        slot: Consumption and generation of the slot

    Returns:
        DataFrame with columns action_index, bits, objective, status,
        ordered by action index

    Raises:
        ValueError: If the feeder has more than ENUMERATION_LIMIT capacitors
    """
    if model.n_caps > ENUMERATION_LIMIT:
        raise ValueError(
            f"enumeration over {model.n_caps} capacitors exceeds the limit of {ENUMERATION_LIMIT}"
        )
    rows = []
    for action in all_actions(model.n_caps):
        _, report = solve_box_qp(assemble_qp(model, sens, slot, action.as_array()))
        rows.append({
            "action_index": action.index,
            "bits": action.bits(),
            "objective": report.objective,
            "status": report.status,
        })
    return pd.DataFrame(rows, columns=["action_index", "bits", "objective", "status"])


def solve_realtime_relaxed(
    model: FeederModel,
    sens: Sensitivity,
    slot: SlotData,
    report_gap: bool = True
) -> Tuple[Action, np.ndarray, SolveReport]:
    """
    Relax-and-round over inverters and capacitors within one slot.

    Args:
        model: Feeder
        sens: Sensitivity matrices of the feeder
        slot: Consumption and generation of the slot
        report_gap: Compute the gap to the enumeration optimum when affordable

    Returns:
        Tuple (rounded Action, q_r, SolveReport of the re-solve). The report's
        rounding_gap is None when enumeration was skipped.
    """
    n_caps = model.n_caps
    inv_buses, q_max = active_inverters(model)
    p, q = slot_injections(model, slot, np.zeros(n_caps, dtype=int))
    v_fixed = sens.voltages(p, q)
    G = np.hstack((
        sens.X_mat[:, inv_buses - 1],
        sens.X_mat[:, model.cap_buses - 1] * model.cap_ratings,
    ))
    lo = np.concatenate((-q_max, np.zeros(n_caps)))
    hi = np.concatenate((q_max, np.ones(n_caps)))
    joint, joint_report = solve_box_qp(qp_from_affine_map(v_fixed, G, model.v0, lo, hi))

    y_relaxed = joint[inv_buses.size:]
    action = action_from_y(round_commitment(y_relaxed))
    q_r, report = solve_box_qp(assemble_qp(model, sens, slot, action.as_array()))
    report.iterations += joint_report.iterations
    logger.debug(
        f"Relaxed objective {joint_report.objective:.6e}, rounded {report.objective:.6e} "
        f"(y* = {np.round(y_relaxed, 4)})"
    )

    gap: Optional[float] = None
    if report_gap and n_caps <= ENUMERATION_LIMIT:
        table = enumerate_capacitor_actions(model, sens, slot)
        gap = max(report.objective - float(table["objective"].min()), 0.0)
    report.rounding_gap = gap
    report.solver = "realtime-relax-round"
    return action, q_r, report
