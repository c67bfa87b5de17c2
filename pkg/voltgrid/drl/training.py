"""
Deep Q-learning update rules: exploration schedule, action selection,
temporal-difference targets and stochastic gradient steps.
"""
import logging
import math
from typing import List, Union

import numpy as np

from voltgrid.config import EPSILON_PERIOD, EPSILON_STEP
from voltgrid.drl.actions import Action, action_from_index
from voltgrid.drl.hyper import HyperQNetwork
from voltgrid.drl.network import QNetwork
from voltgrid.drl.replay import Batch
from voltgrid.exceptions import AgentDivergenceError

logger = logging.getLogger(__name__)

AnyQNetwork = Union[QNetwork, HyperQNetwork]


def epsilon_schedule(tau: int) -> float:
    """Exploration probability max(1 - 0.1 * floor(tau / 50), 0)."""
    if tau < 1:
        raise ValueError(f"interval index must be >= 1, got {tau}")
    return max(1.0 - EPSILON_STEP * (tau // EPSILON_PERIOD), 0.0)


def greedy_index(q_values: np.ndarray) -> int:
    """Argmin of predicted costs; ties go to the lowest index."""
    return int(np.argmin(q_values))


def select_action(net: AnyQNetwork, state: np.ndarray, epsilon: float, rng: np.random.Generator, n_caps: int) -> Action:
    """
    Epsilon-greedy action.

    One uniform draw decides between exploring and exploiting; exploration
    draws a second uniform integer over all actions.

    Args:
        net: Plain or hyper Q-network
        state: MDP state [p_bar; y_hat]
        epsilon: Exploration probability in [0, 1]
        rng: Generator for both draws
        n_caps: Number of capacitors N_a

    Returns:
        Action
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    if rng.random() < epsilon:
        return action_from_index(int(rng.integers(0, net.n_outputs)), n_caps)
    return action_from_index(greedy_index(net.forward(np.asarray(state, dtype=float).ravel())), n_caps)


def td_targets(batch: Batch, target_net: AnyQNetwork, gamma: float) -> np.ndarray:
    """
    Targets cost_j + gamma * min_a' Q_target(s_next_j, a').

    Args:
        batch: Mini-batch
        target_net: Network whose target copy is evaluated
        gamma: Discount factor in [0, 1)
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    next_q = np.atleast_2d(target_net.forward(batch.next_states, target=True))
    return batch.costs + gamma * next_q.min(axis=1)


def sgd_step(net: QNetwork, batch: Batch, targets: np.ndarray, beta: float) -> float:
    """
    One gradient step on the mean squared TD error of the taken actions.

    Returns:
        Batch loss before the update

    Raises:
        AgentDivergenceError: If the loss or gradient is not finite; the
            parameters are left unchanged
    """
    if beta <= 0:
        raise ValueError(f"learning rate must be positive, got {beta}")
    loss, grads = net.loss_and_grads(batch.states, batch.actions, targets)
    if not math.isfinite(loss) or not all(np.all(np.isfinite(dW)) and np.all(np.isfinite(db)) for dW, db in grads):
        raise AgentDivergenceError(f"non-finite loss {loss} in SGD step")
    net.apply_gradients(grads, beta)
    return loss


def sync_target(net: AnyQNetwork):
    """Copy online parameters into the target copy."""
    net.sync_target()


def train_step(net: AnyQNetwork, batch: Batch, gamma: float, beta: float) -> List[float]:
    """
    Targets from the target copy, then one SGD step.

    Returns:
        Per-group losses (one entry for a plain network)
    """
    if isinstance(net, HyperQNetwork):
        return hyper_train_step(net, batch, gamma, beta)
    return [sgd_step(net, batch, td_targets(batch, net, gamma), beta)]


def hyper_train_step(hnet: HyperQNetwork, batch: Batch, gamma: float, beta: float) -> List[float]:
    """
    Route every experience to the sub-network owning its action.

    Targets use the minimum over the concatenated target outputs. Each
    sub-network's loss is averaged over the samples routed to it.

    Returns:
        Loss per group; NaN for groups that received no samples
    """
    targets = td_targets(batch, hnet, gamma)
    groups = hnet.group_of(batch.actions)
    losses = [math.nan] * hnet.k
    for k in np.unique(groups):
        mask = groups == k
        local = Batch(
            states=batch.states[mask],
            actions=batch.actions[mask] - k * hnet.width,
            costs=batch.costs[mask],
            next_states=batch.next_states[mask],
        )
        losses[int(k)] = sgd_step(hnet.groups[int(k)], local, targets[mask], beta)
    return losses
