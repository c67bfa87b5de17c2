"""
SOCP relaxation of the branch flow model solved by ADMM.

The x-block holds [v, P, Q, ell, q_r] and satisfies the linear flow
equations exactly through an equality-constrained KKT solve. The z-block
holds one copy (v_parent, ell, sqrt(2) P, sqrt(2) Q) per line, projected
onto the rotated cone 2ab >= ||w||^2, and one copy of q_r projected onto
its box.
"""
import logging
import math
import weakref
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from voltgrid.config import ADMM_BALANCE_RATIO, ADMM_RHO, SOCP_MAX_ITER, SOCP_TOL
from voltgrid.convexopt.problem import (
    SlotData,
    SolveReport,
    STATUS_INFEASIBLE,
    STATUS_MAX_ITER,
    STATUS_OPTIMAL,
    active_inverters,
    slot_injections,
)
from voltgrid.feeder.feeder_model import FeederModel
from voltgrid.powerflow.flow_state import FlowState

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
BALANCE_EVERY = 25
DIVERGENCE_RATIO = 1e6
DIVERGENCE_WARMUP = 200

_PROGRAM_CACHE: "weakref.WeakKeyDictionary[FeederModel, ConeProgram]" = weakref.WeakKeyDictionary()


@dataclass(eq=False)
class ConeProgram:
    """
    Slot-independent structure of the relaxed problem for one feeder.

    Equality rows: active power balance, reactive power balance and voltage
    drop per line. Copy rows: four per line (one rotated cone block each)
    followed by one per active inverter (box block).
    """
    n_buses: int
    n_inverters: int
    A: sp.csc_matrix
    M: sp.csc_matrix
    m0: np.ndarray
    P_diag: np.ndarray
    c: np.ndarray
    const: float
    root_rows: np.ndarray
    q_max: np.ndarray
    v0: float
    factors: Dict[float, object] = field(default_factory=dict, repr=False)

    @property
    def n_vars(self) -> int:
        return 4 * self.n_buses + self.n_inverters

    def split(self, x: np.ndarray) -> Tuple[np.ndarray, ...]:
        n = self.n_buses
        return x[:n], x[n:2 * n], x[2 * n:3 * n], x[3 * n:4 * n], x[4 * n:]

    def rhs(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Equality right-hand side for fixed injections p and q."""
        b_v = np.zeros(self.n_buses)
        b_v[self.root_rows] = self.v0
        return np.concatenate((-p, -q, b_v))

    def factor(self, rho: float):
        """Sparse LU of the KKT matrix, cached per penalty value."""
        if rho not in self.factors:
            MtM = np.asarray((self.M.T @ self.M).diagonal()).ravel()
            top_left = sp.diags(self.P_diag + rho * MtM)
            kkt = sp.bmat([[top_left, self.A.T], [self.A, None]], format="csc")
            self.factors[rho] = spla.splu(kkt)
        return self.factors[rho]


def build_cone_program(model: FeederModel) -> ConeProgram:
    """
    Assemble (and cache per feeder) the constraint structure of the SOCP.

    Args:
        model: Feeder

    Returns:
        ConeProgram
    """
    cached = _PROGRAM_CACHE.get(model)
    if cached is not None:
        return cached

    n = model.n_buses
    buses, q_max = active_inverters(model)
    m = buses.size
    n_vars = 4 * n + m
    iv, iP, iQ, il, iq = 0, n, 2 * n, 3 * n, 4 * n
    r = model.line_r
    x = model.line_x

    A = sp.lil_matrix((3 * n, n_vars))
    root_rows = []
    for bus in range(1, n + 1):
        i = bus - 1
        A[i, iP + i] = 1.0
        A[i, il + i] = -r[i]
        A[n + i, iQ + i] = 1.0
        A[n + i, il + i] = -x[i]
        for child in model.children[bus]:
            A[i, iP + child - 1] = -1.0
            A[n + i, iQ + child - 1] = -1.0
        row = 2 * n + i
        A[row, iv + i] = 1.0
        A[row, iP + i] = 2.0 * r[i]
        A[row, iQ + i] = 2.0 * x[i]
        A[row, il + i] = -(r[i] ** 2 + x[i] ** 2)
        parent = model.parent[bus]
        if parent == 0:
            root_rows.append(i)
        else:
            A[row, iv + parent - 1] = -1.0
    for k, bus in enumerate(buses):
        A[n + bus - 1, iq + k] = 1.0

    M = sp.lil_matrix((4 * n + m, n_vars))
    m0 = np.zeros(4 * n + m)
    for bus in range(1, n + 1):
        i = bus - 1
        parent = model.parent[bus]
        if parent == 0:
            m0[4 * i] = model.v0
        else:
            M[4 * i, iv + parent - 1] = 1.0
        M[4 * i + 1, il + i] = 1.0
        M[4 * i + 2, iP + i] = SQRT2
        M[4 * i + 3, iQ + i] = SQRT2
    for k in range(m):
        M[4 * n + k, iq + k] = 1.0

    P_diag = np.zeros(n_vars)
    P_diag[iv:iv + n] = 2.0
    c = np.zeros(n_vars)
    c[iv:iv + n] = -2.0 * model.v0

    program = ConeProgram(
        n_buses=n,
        n_inverters=m,
        A=A.tocsc(),
        M=M.tocsc(),
        m0=m0,
        P_diag=P_diag,
        c=c,
        const=n * model.v0 ** 2,
        root_rows=np.array(root_rows, dtype=int),
        q_max=q_max,
        v0=model.v0,
    )
    _PROGRAM_CACHE[model] = program
    logger.debug(f"Built cone program with {n_vars} variables and {n} cone blocks")
    return program


def project_rotated_cones(blocks: np.ndarray) -> np.ndarray:
    """
    Project rows (a, b, w1, w2) onto {2ab >= w1^2 + w2^2, a >= 0, b >= 0}.

    Args:
        blocks: Array of shape (n_lines, 4)

    Returns:
        Projected array of the same shape
    """
    a, b, w = blocks[:, 0], blocks[:, 1], blocks[:, 2:]
    t = (a + b) / SQRT2
    y = np.column_stack(((a - b) / SQRT2, w))
    norm = np.linalg.norm(y, axis=1)

    t_proj = t.copy()
    y_proj = y.copy()
    below = norm <= -t
    outside = (norm > np.abs(t)) & ~below
    t_proj[below] = 0.0
    y_proj[below] = 0.0
    scale = (t[outside] + norm[outside]) / 2.0
    t_proj[outside] = scale
    y_proj[outside] = scale[:, None] * y[outside] / norm[outside][:, None]

    projected = np.empty_like(blocks)
    projected[:, 0] = (t_proj + y_proj[:, 0]) / SQRT2
    projected[:, 1] = (t_proj - y_proj[:, 0]) / SQRT2
    projected[:, 2:] = y_proj[:, 1:]
    return projected


def _project(program: ConeProgram, point: np.ndarray) -> np.ndarray:
    n = program.n_buses
    projected = np.empty_like(point)
    projected[:4 * n] = project_rotated_cones(point[:4 * n].reshape(n, 4)).ravel()
    projected[4 * n:] = np.clip(point[4 * n:], -program.q_max, program.q_max)
    return projected


def solve_socp(
    model: FeederModel,
    slot: SlotData,
    y_hat: np.ndarray,
    tol: float = SOCP_TOL,
    max_iter: int = SOCP_MAX_ITER,
    rho: float = ADMM_RHO
) -> Tuple[FlowState, np.ndarray, SolveReport]:
    """
    Minimize ||v - v0 1||^2 over the SOCP relaxation with y_hat fixed.

    Args:
        model: Feeder
        slot: Consumption and generation of the slot
        y_hat: Binary capacitor commitment
        tol: Tolerance on primal and dual residuals (infinity norm)
        max_iter: Maximum ADMM iterations
        rho: Initial penalty; doubled or halved when residuals are unbalanced

    Returns:
        Tuple (FlowState, q_r, SolveReport)
    """
    program = build_cone_program(model)
    p, q = slot_injections(model, slot, y_hat)
    b = program.rhs(p, q)
    n_vars = program.n_vars
    M, MT = program.M, program.M.T.tocsc()

    x = np.zeros(n_vars)
    z = _project(program, program.m0.copy())
    u = np.zeros_like(z)
    factor = program.factor(rho)
    status = STATUS_MAX_ITER
    best_primal = math.inf
    primal = dual = math.inf
    iteration = 0

    for iteration in range(1, max_iter + 1):
        rhs_top = -program.c - rho * (MT @ (program.m0 - z + u))
        x = factor.solve(np.concatenate((rhs_top, b)))[:n_vars]
        Mx = M @ x + program.m0
        z_prev = z
        z = _project(program, Mx + u)
        u = u + Mx - z

        primal = float(np.max(np.abs(Mx - z)))
        dual = float(rho * np.max(np.abs(MT @ (z - z_prev))))
        if primal <= tol and dual <= tol:
            status = STATUS_OPTIMAL
            break

        if not math.isfinite(primal) or (
            iteration > DIVERGENCE_WARMUP and primal > DIVERGENCE_RATIO * max(best_primal, tol)
        ):
            status = STATUS_INFEASIBLE
            logger.warning(f"ADMM residuals diverging at iteration {iteration} (primal {primal:.3e})")
            break
        best_primal = min(best_primal, primal)

        if iteration % BALANCE_EVERY == 0:
            if primal > ADMM_BALANCE_RATIO * dual:
                rho, u = rho * 2.0, u / 2.0
                factor = program.factor(rho)
            elif dual > ADMM_BALANCE_RATIO * primal:
                rho, u = rho / 2.0, u * 2.0
                factor = program.factor(rho)

    v, P, Q, ell, q_r = program.split(x)
    q_r = np.clip(q_r, -program.q_max, program.q_max)
    state = FlowState(v=v.copy(), P=P.copy(), Q=Q.copy(), ell=ell.copy(), v0=model.v0, iterations=iteration)
    report = SolveReport(
        objective=state.deviation(),
        iterations=iteration,
        primal_residual=primal,
        dual_residual=dual,
        status=status,
        solver="socp-admm",
    )
    if status != STATUS_OPTIMAL:
        logger.warning(f"SOCP solve ended with status {status} after {iteration} iterations")
    return state, q_r, report
