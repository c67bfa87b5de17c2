"""
Deep Q-learning agent for capacitor commitment.
"""
import logging
from typing import List, Optional, Sequence

import numpy as np

from voltgrid.config import LEARNING_RATE
from voltgrid.drl.actions import Action, n_actions
from voltgrid.drl.hyper import HyperQNetwork
from voltgrid.drl.network import QNetwork
from voltgrid.drl.replay import Experience, ReplayBuffer
from voltgrid.drl.training import AnyQNetwork, epsilon_schedule, select_action, sync_target, train_step

logger = logging.getLogger(__name__)


def build_network(
    n_inputs: int,
    hidden: Sequence[int],
    n_caps: int,
    hyper_k: int,
    output_scale: float,
    rng: np.random.Generator
) -> AnyQNetwork:
    """A plain network for K = 1, a hyper network otherwise."""
    if hyper_k == 1:
        return QNetwork([n_inputs, *hidden, n_actions(n_caps)], output_scale, rng)
    return HyperQNetwork(n_inputs, hidden, n_actions(n_caps), hyper_k, output_scale, rng)


class DQNAgent:
    """
    Q-network, replay memory and random generator of one training run.

    Costs passed to observe() are divided by cost_scale before they enter
    the replay memory, so TD targets stay inside the sigmoid output range.
    """

    def __init__(
        self,
        n_buses: int,
        n_caps: int,
        hidden: Sequence[int] = (44, 12),
        gamma: float = 0.99,
        replay: int = 10,
        batch: int = 10,
        target_sync: int = 5,
        hyper_k: int = 1,
        beta: float = LEARNING_RATE,
        output_scale: Optional[float] = None,
        cost_scale: float = 1.0,
        rng: Optional[np.random.Generator] = None
    ):
        if not 0.0 <= gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
        if not replay >= batch >= 1:
            raise ValueError(f"need replay >= batch >= 1, got replay={replay}, batch={batch}")
        if target_sync < 1:
            raise ValueError(f"target sync period must be >= 1, got {target_sync}")
        if cost_scale <= 0:
            raise ValueError(f"cost_scale must be positive, got {cost_scale}")

        self.n_buses = n_buses
        self.n_caps = n_caps
        self.hidden = tuple(int(h) for h in hidden)
        self.gamma = gamma
        self.batch = batch
        self.target_sync = target_sync
        self.hyper_k = hyper_k
        self.beta = beta
        self.output_scale = output_scale if output_scale is not None else 1.0 / (1.0 - gamma)
        self.cost_scale = cost_scale
        self.rng = rng if rng is not None else np.random.default_rng()

        self.net = build_network(self.state_dim, self.hidden, n_caps, hyper_k, self.output_scale, self.rng)
        self.buffer = ReplayBuffer(replay, self.state_dim)
        self.train_steps = 0
        self.sync_log: List[int] = []
        self.last_loss: Optional[float] = None
        self.last_state: Optional[np.ndarray] = None
        self.cost_sum = 0.0

    @property
    def state_dim(self) -> int:
        return self.n_buses + self.n_caps

    def epsilon(self, tau: int, override: Optional[float] = None) -> float:
        return override if override is not None else epsilon_schedule(tau)

    def act(self, state: np.ndarray, tau: int, epsilon: Optional[float] = None) -> Action:
        """Epsilon-greedy commitment for interval tau."""
        return select_action(self.net, state, self.epsilon(tau, epsilon), self.rng, self.n_caps)

    def observe(self, s_prev: np.ndarray, action: Action, cost: float, s_next: np.ndarray):
        self.buffer.push(Experience(np.asarray(s_prev, dtype=float), action.index, cost / self.cost_scale, np.asarray(s_next, dtype=float)))
        self.last_state = np.asarray(s_next, dtype=float).copy()
        self.cost_sum += float(cost)

    def learn(self) -> Optional[float]:
        """
        One mini-batch update once the buffer holds at least `batch` experiences.

        Returns:
            Mean loss over the groups that trained, or None when skipped
        """
        if len(self.buffer) < self.batch:
            return None
        minibatch = self.buffer.sample(self.batch, self.rng)
        losses = train_step(self.net, minibatch, self.gamma, self.beta)
        self.train_steps += 1
        self.last_loss = float(np.nanmean(losses))
        return self.last_loss

    def maybe_sync(self, tau: int) -> bool:
        """Sync the target copy when tau is a multiple of the sync period."""
        if tau % self.target_sync != 0:
            return False
        sync_target(self.net)
        self.sync_log.append(tau)
        logger.debug(f"Target network synced at interval {tau}")
        return True

    def q_values(self, state: np.ndarray) -> np.ndarray:
        return self.net.forward(np.asarray(state, dtype=float).ravel())
