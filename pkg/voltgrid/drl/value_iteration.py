"""
Tabular value iteration for cost-minimizing MDPs.
"""
import logging
from typing import Tuple

import numpy as np

logger = logging.getLogger(__name__)


def value_iteration(
    transitions: np.ndarray,
    costs: np.ndarray,
    gamma: float,
    tol: float = 1e-12,
    max_iter: int = 100000
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Solve Q(s, a) = c(s, a) + gamma * sum_s' P(s' | s, a) min_a' Q(s', a').

    Args:
        transitions: Array P[s, a, s'] with rows summing to one
        costs: Array c[s, a]
        gamma: Discount factor in [0, 1)
        tol: Stop when successive value functions differ by at most tol
        max_iter: Iteration cap

    Returns:
        Tuple (V, Q, greedy policy with ties to the lowest action)
    """
    transitions = np.asarray(transitions, dtype=float)
    costs = np.asarray(costs, dtype=float)
    n_states, n_actions = costs.shape
    if transitions.shape != (n_states, n_actions, n_states):
        raise ValueError(f"transitions must have shape {(n_states, n_actions, n_states)}, got {transitions.shape}")
    if not np.allclose(transitions.sum(axis=2), 1.0):
        raise ValueError("transition rows must sum to one")

    V = np.zeros(n_states)
    Q = costs.copy()
    for iteration in range(max_iter):
        Q = costs + gamma * transitions @ V
        V_next = Q.min(axis=1)
        if np.max(np.abs(V_next - V)) <= tol:
            V = V_next
            break
        V = V_next
    else:
        logger.warning(f"Value iteration did not reach tolerance {tol} in {max_iter} iterations")
    return V, Q, np.argmin(Q, axis=1)
