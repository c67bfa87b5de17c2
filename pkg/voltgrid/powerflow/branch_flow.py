"""
Exact branch flow model solved by a backward-forward sweep.
"""
import logging

import numpy as np

from voltgrid.config import MIN_SQUARED_VOLTAGE, SWEEP_MAX_ITER, SWEEP_TOL
from voltgrid.exceptions import ConvergenceError, InfeasibleOperatingPointError
from voltgrid.feeder.feeder_model import FeederModel
from voltgrid.powerflow.flow_state import FlowState
from voltgrid.powerflow.lindistflow import check_injections

logger = logging.getLogger(__name__)


def solve_branch_flow_exact(
    model: FeederModel,
    p: np.ndarray,
    q: np.ndarray,
    tol: float = SWEEP_TOL,
    max_iter: int = SWEEP_MAX_ITER
) -> FlowState:
    """
    Fixed point of the branch flow equations with line losses.

    Each sweep recomputes squared currents from the previous voltages,
    accumulates flows leaf to root including the r*ell and x*ell loss terms,
    then propagates squared voltages root to leaf. Iteration stops when
    successive voltages differ by at most tol in the infinity norm.

    Args:
        model: Feeder
        p: Net active injection per bus
        q: Net reactive injection per bus
        tol: Convergence tolerance on squared voltages
        max_iter: Maximum number of sweeps

    Returns:
        FlowState of the converged operating point

    Raises:
        ConvergenceError: If the sweep does not converge within max_iter
        InfeasibleOperatingPointError: If a squared voltage drops to (near) zero
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    check_injections(model, p, q)
    n = model.n_buses
    r = model.line_r
    x = model.line_x
    z2 = r * r + x * x
    parent = model.parent
    bottom_up = model.bottom_up_order()
    top_down = model.top_down_order()

    full_v = np.full(n + 1, model.v0)
    P = np.zeros(n)
    Q = np.zeros(n)
    ell = np.zeros(n)

    for iteration in range(1, max_iter + 1):
        ell = (P * P + Q * Q) / full_v[parent[1:]]

        for bus in bottom_up:
            i = bus - 1
            P[i] = -p[i] + r[i] * ell[i]
            Q[i] = -q[i] + x[i] * ell[i]
            for child in model.children[bus]:
                P[i] += P[child - 1]
                Q[i] += Q[child - 1]

        previous = full_v.copy()
        for bus in top_down:
            i = bus - 1
            full_v[bus] = full_v[parent[bus]] - 2.0 * (r[i] * P[i] + x[i] * Q[i]) + z2[i] * ell[i]
            if full_v[bus] <= MIN_SQUARED_VOLTAGE:
                raise InfeasibleOperatingPointError(
                    f"squared voltage {full_v[bus]:.3e} at bus {bus} in sweep {iteration}"
                )

        change = float(np.max(np.abs(full_v - previous)))
        logger.debug(f"Sweep {iteration}: max voltage change {change:.3e}")
        if change <= tol:
            ell = (P * P + Q * Q) / full_v[parent[1:]]
            return FlowState(v=full_v[1:].copy(), P=P, Q=Q, ell=ell, v0=model.v0, iterations=iteration)

    raise ConvergenceError(
        f"backward-forward sweep did not converge in {max_iter} iterations (last change {change:.3e})"
    )


def branch_flow_residuals(model: FeederModel, p: np.ndarray, q: np.ndarray, state: FlowState) -> float:
    """
    Infinity norm of the residuals of the exact branch flow equations.

    Returns:
        Largest absolute residual across flow balance, voltage drop and current equations
    """
    n = model.n_buses
    child_P = np.zeros(n)
    child_Q = np.zeros(n)
    for bus in range(1, n + 1):
        parent = model.parent[bus]
        if parent != 0:
            child_P[parent - 1] += state.P[bus - 1]
            child_Q[parent - 1] += state.Q[bus - 1]
    r = model.line_r
    x = model.line_x
    res_p = p - (child_P - (state.P - r * state.ell))
    res_q = q - (child_Q - (state.Q - x * state.ell))
    v_parent = state.parent_voltages(model.parent)
    res_v = state.v - (v_parent - 2.0 * (r * state.P + x * state.Q) + (r * r + x * x) * state.ell)
    res_l = state.ell * v_parent - (state.P ** 2 + state.Q ** 2)
    return float(max(np.abs(res_p).max(), np.abs(res_q).max(), np.abs(res_v).max(), np.abs(res_l).max()))
