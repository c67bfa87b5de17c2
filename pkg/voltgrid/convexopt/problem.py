"""
Fast-timescale problem data: slot injections, the box QP on the linear
model, and the solver report shared by all fast-timescale solvers.
"""
import logging
from dataclasses import dataclass, field, asdict
from typing import Dict, Optional, Tuple, Any

import numpy as np

from voltgrid.feeder.feeder_model import FeederModel
from voltgrid.feeder.profiles import ScenarioProfile
from voltgrid.powerflow.branch_flow import solve_branch_flow_exact
from voltgrid.powerflow.lindistflow import Sensitivity, build_sensitivity

logger = logging.getLogger(__name__)

STATUS_OPTIMAL = "optimal"
STATUS_MAX_ITER = "max-iter"
STATUS_INFEASIBLE = "infeasible"
STATUS_STALLED = "stalled"


@dataclass(frozen=True)
class SlotData:
    """Exogenous per-bus consumption and generation of one slot (per-unit)."""
    p_c: np.ndarray
    q_c: np.ndarray
    p_g: np.ndarray

    @classmethod
    def from_profile(cls, profile: ScenarioProfile, tau: int, t: int) -> "SlotData":
        p_c, q_c, p_g = profile.slot(tau, t)
        return cls(p_c=p_c, q_c=q_c, p_g=p_g)

    @classmethod
    def zeros(cls, n_buses: int) -> "SlotData":
        return cls(p_c=np.zeros(n_buses), q_c=np.zeros(n_buses), p_g=np.zeros(n_buses))


@dataclass
class SolveReport:
    """Outcome of one fast-timescale solve."""
    objective: float
    iterations: int
    primal_residual: float
    dual_residual: float
    status: str
    solver: str
    kkt_residual: float = 0.0
    rounding_gap: Optional[float] = None
    objective_history: Tuple[float, ...] = field(default=(), repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == STATUS_OPTIMAL

    def to_dict(self) -> Dict[str, Any]:
        record = asdict(self)
        record.pop("objective_history")
        return record


def active_inverters(model: FeederModel) -> Tuple[np.ndarray, np.ndarray]:
    """
    Inverter buses with a nonzero reactive limit.

    Returns:
        Tuple of (bus indices, q_max) for the decision variables q_r
    """
    q_max = model.q_max
    mask = q_max > 0
    return model.inv_buses[mask], q_max[mask]


def capacitor_injection(model: FeederModel, y_hat: np.ndarray) -> np.ndarray:
    """
    Reactive injection per bus of the committed capacitors.

    Raises:
        ValueError: If y_hat is not a binary vector of length N_a
    """
    y_hat = np.asarray(y_hat)
    if y_hat.shape != (model.n_caps,):
        raise ValueError(f"y_hat must have length {model.n_caps}, got shape {y_hat.shape}")
    if not np.all((y_hat == 0) | (y_hat == 1)):
        raise ValueError(f"y_hat must be binary, got {y_hat}")
    q = np.zeros(model.n_buses)
    q[model.cap_buses - 1] = y_hat * model.cap_ratings
    return q


def slot_injections(model: FeederModel, slot: SlotData, y_hat: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Fixed net injections of a slot with inverter setpoints at zero.

    Args:
        model: Feeder
        slot: Consumption and generation of the slot
        y_hat: Binary capacitor commitment

    Returns:
        Tuple (p, q) with p = p_g - p_c and q = committed capacitor VARs - q_c
    """
    p = slot.p_g - slot.p_c
    q = capacitor_injection(model, y_hat) - slot.q_c
    return p, q


@dataclass(frozen=True)
class QpProblem:
    """
    Box-constrained QP  min 0.5 z'Hz + g'z + const  s.t. lo <= z <= hi,
    whose objective equals ||v_fixed + G z - v0 1||^2.
    """
    H: np.ndarray
    g: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    const: float
    G: np.ndarray
    v_fixed: np.ndarray
    v0: float

    @property
    def size(self) -> int:
        return int(self.g.size)

    def objective(self, z: np.ndarray) -> float:
        return float(0.5 * z @ (self.H @ z) + self.g @ z + self.const)

    def voltages(self, z: np.ndarray) -> np.ndarray:
        return self.v_fixed + self.G @ z


def qp_from_affine_map(v_fixed: np.ndarray, G: np.ndarray, v0: float, lo: np.ndarray, hi: np.ndarray) -> QpProblem:
    """
    Build the QP minimizing ||v_fixed + G z - v0 1||^2 over a box.

    Args:
        v_fixed: Voltages with all decision variables at zero
        G: Sensitivity of voltages to the decision variables
        v0: Reference squared voltage
        lo: Lower bounds
        hi: Upper bounds

    Returns:
        QpProblem
    """
    if np.any(lo > 0) or np.any(hi < 0) or np.any(lo > hi):
        raise ValueError("box bounds must satisfy lo <= 0 <= hi")
    offset = v_fixed - v0
    return QpProblem(
        H=2.0 * G.T @ G,
        g=2.0 * G.T @ offset,
        lo=np.asarray(lo, dtype=float),
        hi=np.asarray(hi, dtype=float),
        const=float(offset @ offset),
        G=G,
        v_fixed=v_fixed,
        v0=v0,
    )


def assemble_qp(model: FeederModel, sens: Sensitivity, slot: SlotData, y_hat: np.ndarray) -> QpProblem:
    """
    Substitute loads, PV output and committed capacitors into the linear
    voltage map so that only the inverter setpoints remain free.

    Args:
        model: Feeder
        sens: Sensitivity matrices of the feeder
        slot: Consumption and generation of the slot
        y_hat: Binary capacitor commitment

    Returns:
        QpProblem over the active inverters' q_r
    """
    p, q = slot_injections(model, slot, y_hat)
    if p.shape != (model.n_buses,):
        raise ValueError(f"slot data must have length {model.n_buses}, got {p.shape}")
    buses, q_max = active_inverters(model)
    v_fixed = sens.voltages(p, q)
    G = sens.X_mat[:, buses - 1]
    return qp_from_affine_map(v_fixed, G, model.v0, -q_max, q_max)


def setpoints_per_bus(model: FeederModel, q_r: np.ndarray) -> np.ndarray:
    """Scatter active-inverter setpoints into a per-bus vector."""
    buses, _ = active_inverters(model)
    q = np.zeros(model.n_buses)
    q[buses - 1] = q_r
    return q


def evaluate_setpoints(
    model: FeederModel,
    slot: SlotData,
    y_hat: np.ndarray,
    q_r: np.ndarray,
    physics: str = "linear"
) -> Tuple[np.ndarray, float]:
    """
    Voltages and deviation objective of given setpoints.

    Args:
        model: Feeder
        slot: Consumption and generation of the slot
        y_hat: Binary capacitor commitment
        q_r: Active-inverter setpoints
        physics: 'linear' for the linearized model, 'exact' for the branch flow sweep

    Returns:
        Tuple (v, ||v - v0 1||^2)
    """
    p, q = slot_injections(model, slot, y_hat)
    q = q + setpoints_per_bus(model, q_r)
    if physics == "linear":
        v = build_sensitivity(model).voltages(p, q)
    elif physics == "exact":
        v = solve_branch_flow_exact(model, p, q).v
    else:
        raise ValueError(f"unknown physics '{physics}'")
    return v, float(np.sum((v - model.v0) ** 2))
