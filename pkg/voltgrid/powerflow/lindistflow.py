"""
Linearized distribution flow: recursion, dense oracle and sensitivity matrices.
"""
import logging
import weakref
from dataclasses import dataclass

import numpy as np

from voltgrid.feeder.feeder_model import FeederModel
from voltgrid.powerflow.flow_state import FlowState

logger = logging.getLogger(__name__)

_SENSITIVITY_CACHE: "weakref.WeakKeyDictionary[FeederModel, Sensitivity]" = weakref.WeakKeyDictionary()


def check_injections(model: FeederModel, p: np.ndarray, q: np.ndarray):
    """
    Validate injection vector lengths.

    Raises:
        ValueError: If p or q does not have length N
    """
    for label, vector in (("p", p), ("q", q)):
        if np.shape(vector) != (model.n_buses,):
            raise ValueError(
                f"{label} must have length {model.n_buses}, got shape {np.shape(vector)}"
            )


def solve_lindistflow(model: FeederModel, p: np.ndarray, q: np.ndarray) -> FlowState:
    """
    Solve the linearized branch flow equations on a radial feeder.

    Line flows are accumulated leaf to root, then squared voltages are
    propagated root to leaf with v_0 fixed.

    Args:
        model: Feeder
        p: Net active injection per bus (generation minus consumption)
        q: Net reactive injection per bus

    Returns:
        FlowState with ell identically zero
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    check_injections(model, p, q)
    n = model.n_buses

    P = np.zeros(n)
    Q = np.zeros(n)
    for bus in model.bottom_up_order():
        P[bus - 1] = -p[bus - 1]
        Q[bus - 1] = -q[bus - 1]
        for child in model.children[bus]:
            P[bus - 1] += P[child - 1]
            Q[bus - 1] += Q[child - 1]

    full_v = np.empty(n + 1)
    full_v[0] = model.v0
    for bus in model.top_down_order():
        i = bus - 1
        full_v[bus] = full_v[model.parent[bus]] - 2.0 * (model.line_r[i] * P[i] + model.line_x[i] * Q[i])

    return FlowState(v=full_v[1:], P=P, Q=Q, ell=np.zeros(n), v0=model.v0)


def dense_lindistflow(model: FeederModel, p: np.ndarray, q: np.ndarray) -> FlowState:
    """
    Solve the same linear equations at once with a dense linear solve.

    Unknowns are stacked as [P; Q; v]. Used as an oracle for the recursion.

    Args:
        model: Feeder
        p: Net active injection per bus
        q: Net reactive injection per bus

    Returns:
        FlowState
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    check_injections(model, p, q)
    n = model.n_buses
    A = np.zeros((3 * n, 3 * n))
    b = np.zeros(3 * n)
    for bus in range(1, n + 1):
        i = bus - 1
        A[i, i] = 1.0
        A[n + i, n + i] = 1.0
        for child in model.children[bus]:
            A[i, child - 1] = -1.0
            A[n + i, n + child - 1] = -1.0
        b[i] = -p[i]
        b[n + i] = -q[i]

        row = 2 * n + i
        A[row, 2 * n + i] = 1.0
        A[row, i] = 2.0 * model.line_r[i]
        A[row, n + i] = 2.0 * model.line_x[i]
        parent = model.parent[bus]
        if parent == 0:
            b[row] = model.v0
        else:
            A[row, 2 * n + parent - 1] = -1.0
    x = np.linalg.solve(A, b)
    return FlowState(v=x[2 * n:], P=x[:n], Q=x[n:2 * n], ell=np.zeros(n), v0=model.v0)


def lindistflow_residuals(model: FeederModel, p: np.ndarray, q: np.ndarray, state: FlowState) -> float:
    """
    Infinity norm of the residuals of the linearized equations at a state.

    Returns:
        Largest absolute residual across the active, reactive and voltage equations
    """
    n = model.n_buses
    child_P = np.zeros(n)
    child_Q = np.zeros(n)
    for bus in range(1, n + 1):
        parent = model.parent[bus]
        if parent != 0:
            child_P[parent - 1] += state.P[bus - 1]
            child_Q[parent - 1] += state.Q[bus - 1]
    res_p = p - (child_P - state.P)
    res_q = q - (child_Q - state.Q)
    v_parent = state.parent_voltages(model.parent)
    res_v = state.v - (v_parent - 2.0 * (model.line_r * state.P + model.line_x * state.Q))
    return float(max(np.abs(res_p).max(), np.abs(res_q).max(), np.abs(res_v).max()))


@dataclass(frozen=True)
class Sensitivity:
    """
    Affine voltage map v = v_base + R_mat p + X_mat q of the linear model.
    """
    R_mat: np.ndarray
    X_mat: np.ndarray
    v_base: np.ndarray

    def voltages(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        return self.v_base + self.R_mat @ p + self.X_mat @ q


def path_matrix(model: FeederModel) -> np.ndarray:
    """
    Line-to-bus incidence of root paths.

    Returns:
        N x N matrix T with T[l-1, i-1] = 1 when the line into bus l lies on
        the path from bus i to the substation
    """
    n = model.n_buses
    T = np.zeros((n, n))
    for bus in range(1, n + 1):
        T[np.array(model.path_to_root(bus)) - 1, bus - 1] = 1.0
    return T


def build_sensitivity(model: FeederModel) -> Sensitivity:
    """
    Build (and cache per feeder) the voltage sensitivity matrices.

    Entry (i, j) of R_mat is twice the resistance shared by the root paths
    of buses i and j; X_mat likewise with reactance.

    Args:
        model: Feeder

    Returns:
        Sensitivity
    """
    cached = _SENSITIVITY_CACHE.get(model)
    if cached is not None:
        return cached

    T = path_matrix(model)
    R_mat = 2.0 * T.T @ (model.line_r[:, None] * T)
    X_mat = 2.0 * T.T @ (model.line_x[:, None] * T)
    v_base = np.full(model.n_buses, model.v0)
    for array in (R_mat, X_mat, v_base):
        array.setflags(write=False)
    sens = Sensitivity(R_mat=R_mat, X_mat=X_mat, v_base=v_base)
    _SENSITIVITY_CACHE[model] = sens
    logger.debug(f"Built sensitivity matrices for {model.n_buses} buses")
    return sens
