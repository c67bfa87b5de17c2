"""
Hyper deep Q-network: the 2^N_a Q-value outputs are split across K
sub-networks that all read the same state. Sub-network k owns action
indices [k * width, (k + 1) * width).
"""
import logging
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from voltgrid.drl.network import QNetwork

logger = logging.getLogger(__name__)


class HyperQNetwork:
    """K equal-width Q-networks whose outputs are concatenated."""

    def __init__(
        self,
        n_inputs: int,
        hidden: Sequence[int],
        n_actions: int,
        k: int,
        output_scale: float = 1.0,
        rng: Optional[np.random.Generator] = None
    ):
        """
        Args:
            n_inputs: State dimension N + N_a
            hidden: Hidden layer sizes of every sub-network
            n_actions: Total number of actions 2^N_a
            k: Number of sub-networks; must divide n_actions
            output_scale: Upper bound of the predicted Q-values
            rng: Generator for the initial weights, consumed in group order
        """
        if k < 1 or n_actions % k != 0:
            raise ValueError(f"K={k} must divide the number of actions {n_actions}")
        rng = rng if rng is not None else np.random.default_rng()
        self.k = int(k)
        self.n_actions = int(n_actions)
        self.width = self.n_actions // self.k
        sizes = [int(n_inputs), *[int(h) for h in hidden], self.width]
        self.groups: List[QNetwork] = [QNetwork(sizes, output_scale, rng) for _ in range(self.k)]

    @property
    def n_inputs(self) -> int:
        return self.groups[0].n_inputs

    @property
    def n_outputs(self) -> int:
        return self.n_actions

    @property
    def output_scale(self) -> float:
        return self.groups[0].output_scale

    def group_of(self, actions: np.ndarray) -> np.ndarray:
        return np.asarray(actions, dtype=int) // self.width

    def forward(self, states: np.ndarray, target: bool = False) -> np.ndarray:
        """Concatenated Q-values [o_1; ...; o_K]."""
        outputs = [net.forward(states, target=target) for net in self.groups]
        return np.concatenate(outputs, axis=-1)

    def sync_target(self):
        for net in self.groups:
            net.sync_target()

    def parameters_finite(self) -> bool:
        return all(net.parameters_finite() for net in self.groups)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "n_actions": self.n_actions,
            "groups": [net.to_dict() for net in self.groups],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "HyperQNetwork":
        first = data["groups"][0]
        sizes = first["layer_sizes"]
        hnet = cls(sizes[0], sizes[1:-1], data["n_actions"], data["k"], first["output_scale"], np.random.default_rng(0))
        hnet.groups = [QNetwork.from_dict(group) for group in data["groups"]]
        return hnet


def hyper_forward(hnet: HyperQNetwork, state: np.ndarray) -> np.ndarray:
    """Q-values of one state over all 2^N_a actions."""
    return hnet.forward(np.asarray(state, dtype=float).ravel())
