"""
Experience replay memory holding the R most recent transitions.
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Experience:
    """Transition (s(tau-1), a(tau), cost, s(tau)); states are [p_bar; y_hat]."""
    s_prev: np.ndarray
    action: int
    cost: float
    s_next: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.cost):
            raise ValueError(f"experience cost must be finite, got {self.cost}")


@dataclass(frozen=True)
class Batch:
    """Stacked experiences."""
    states: np.ndarray
    actions: np.ndarray
    costs: np.ndarray
    next_states: np.ndarray

    @property
    def size(self) -> int:
        return int(self.actions.size)

    @classmethod
    def from_experiences(cls, experiences: Sequence[Experience]) -> "Batch":
        return cls(
            states=np.array([e.s_prev for e in experiences], dtype=float),
            actions=np.array([e.action for e in experiences], dtype=int),
            costs=np.array([e.cost for e in experiences], dtype=float),
            next_states=np.array([e.s_next for e in experiences], dtype=float),
        )

    def subset(self, mask: np.ndarray) -> "Batch":
        return Batch(self.states[mask], self.actions[mask], self.costs[mask], self.next_states[mask])


class ReplayBuffer:
    """Fixed-capacity ring buffer of experiences."""

    def __init__(self, capacity: int, state_dim: int):
        if capacity < 1:
            raise ValueError(f"replay capacity must be at least 1, got {capacity}")
        self.capacity = int(capacity)
        self.state_dim = int(state_dim)
        self.states = np.zeros((self.capacity, self.state_dim))
        self.actions = np.zeros(self.capacity, dtype=int)
        self.costs = np.zeros(self.capacity)
        self.next_states = np.zeros((self.capacity, self.state_dim))
        self.cursor = 0
        self.size = 0
        self.pushed = 0

    def __len__(self) -> int:
        return self.size

    def push(self, experience: Experience):
        if np.size(experience.s_prev) != self.state_dim or np.size(experience.s_next) != self.state_dim:
            raise ValueError(f"experience states must have dimension {self.state_dim}")
        self.states[self.cursor] = experience.s_prev
        self.actions[self.cursor] = experience.action
        self.costs[self.cursor] = experience.cost
        self.next_states[self.cursor] = experience.s_next
        self.cursor = (self.cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.pushed += 1

    def _ordered_slots(self) -> np.ndarray:
        """Storage slots from oldest to newest."""
        start = self.cursor if self.size == self.capacity else 0
        return (start + np.arange(self.size)) % self.capacity

    def contents(self) -> List[Experience]:
        return [
            Experience(self.states[i].copy(), int(self.actions[i]), float(self.costs[i]), self.next_states[i].copy())
            for i in self._ordered_slots()
        ]

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """
        Draw a mini-batch uniformly with replacement.

        Raises:
            ValueError: If the buffer is empty
        """
        if self.size == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        slots = self._ordered_slots()[idx]
        return Batch(
            states=self.states[slots].copy(),
            actions=self.actions[slots].copy(),
            costs=self.costs[slots].copy(),
            next_states=self.next_states[slots].copy(),
        )

    def to_dict(self) -> Dict[str, Any]:
        slots = self._ordered_slots()
        return {
            "capacity": self.capacity,
            "state_dim": self.state_dim,
            "pushed": self.pushed,
            "states": self.states[slots].tolist(),
            "actions": self.actions[slots].tolist(),
            "costs": self.costs[slots].tolist(),
            "next_states": self.next_states[slots].tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ReplayBuffer":
        buffer = cls(data["capacity"], data["state_dim"])
        for s_prev, action, cost, s_next in zip(data["states"], data["actions"], data["costs"], data["next_states"]):
            buffer.push(Experience(np.array(s_prev, dtype=float), int(action), float(cost), np.array(s_next, dtype=float)))
        buffer.pushed = int(data["pushed"])
        return buffer
