"""
Box-constrained QP solver: projected gradient with fixed step 1/L, where
L is the largest eigenvalue of H, plus a projected Newton step on the free
coordinates that is kept only when it does not increase the objective.
"""
import logging
from typing import Tuple

import numpy as np

from voltgrid.config import QP_MAX_ITER, QP_TOL
from voltgrid.convexopt.problem import (
    QpProblem,
    SolveReport,
    STATUS_MAX_ITER,
    STATUS_OPTIMAL,
    STATUS_STALLED,
)

logger = logging.getLogger(__name__)

NEWTON_EVERY = 10


def kkt_residual(problem: QpProblem, z: np.ndarray) -> float:
    """Fixed-point residual ||z - clip(z - (Hz + g), lo, hi)||_inf."""
    if problem.size == 0:
        return 0.0
    grad = problem.H @ z + problem.g
    return float(np.max(np.abs(z - np.clip(z - grad, problem.lo, problem.hi))))


def _newton_step(problem: QpProblem, z: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Projected Newton candidate; clamped coordinates stay at their bound."""
    clamped = ((z <= problem.lo) & (grad > 0)) | ((z >= problem.hi) & (grad < 0))
    free = ~clamped
    if not free.any():
        return z
    H_ff = problem.H[np.ix_(free, free)]
    step = np.linalg.lstsq(H_ff, -grad[free], rcond=None)[0]
    candidate = z.copy()
    candidate[free] += step
    return np.clip(candidate, problem.lo, problem.hi)


def solve_box_qp(
    problem: QpProblem,
    tol: float = QP_TOL,
    max_iter: int = QP_MAX_ITER
) -> Tuple[np.ndarray, SolveReport]:
    """
    Minimize 0.5 z'Hz + g'z over lo <= z <= hi.

    Args:
        problem: QP data
        tol: Tolerance on the fixed-point (KKT) residual
        max_iter: Maximum number of gradient iterations

    Returns:
        Tuple of (z, SolveReport). On max-iter the best iterate is returned
        with status 'max-iter', or 'stalled' when a step would raise the
        objective before the tolerance is met; every returned z lies inside
        the box.
    """
    n = problem.size
    if n == 0:
        report = SolveReport(
            objective=problem.const, iterations=0, primal_residual=0.0,
            dual_residual=0.0, status=STATUS_OPTIMAL, solver="box-qp",
            objective_history=(problem.const,),
        )
        return np.zeros(0), report

    L = float(np.linalg.eigvalsh(problem.H).max())
    step = 1.0 / L if L > 0 else 1.0
    z = np.clip(np.zeros(n), problem.lo, problem.hi)
    f = problem.objective(z)
    history = [f]
    status = STATUS_MAX_ITER
    residual = kkt_residual(problem, z)
    iteration = 0

    while iteration < max_iter and residual > tol:
        iteration += 1
        grad = problem.H @ z + problem.g
        z_next = np.clip(z - step * grad, problem.lo, problem.hi)
        f_next = problem.objective(z_next)

        if iteration % NEWTON_EVERY == 0:
            grad_next = problem.H @ z_next + problem.g
            candidate = _newton_step(problem, z_next, grad_next)
            f_candidate = problem.objective(candidate)
            if f_candidate <= f_next:
                z_next, f_next = candidate, f_candidate

        # keep the history monotone
        if f_next > f:
            logger.debug(f"Box QP stalled at iteration {iteration} (residual {residual:.3e})")
            status = STATUS_STALLED
            break
        z, f = z_next, f_next
        history.append(f)
        residual = kkt_residual(problem, z)

    if residual <= tol:
        status = STATUS_OPTIMAL

    if status != STATUS_OPTIMAL:
        logger.warning(f"Box QP {status} after {iteration} iterations with KKT residual {residual:.3e}")

    report = SolveReport(
        objective=f,
        iterations=iteration,
        primal_residual=0.0,
        dual_residual=residual,
        status=status,
        solver="box-qp",
        kkt_residual=residual,
        objective_history=tuple(history),
    )
    return z, report
