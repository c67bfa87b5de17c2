"""
Capacitor commitments and their binary index encoding (bit k = capacitor k).
"""
from dataclasses import dataclass
from typing import List

import numpy as np


@dataclass(frozen=True)
class Action:
    """A capacitor commitment y and its index in [0, 2^N_a)."""
    y: tuple
    index: int

    @property
    def n_caps(self) -> int:
        return len(self.y)

    def as_array(self) -> np.ndarray:
        return np.array(self.y, dtype=float)

    def bits(self) -> str:
        """Bit string, capacitor 1 first."""
        return "".join(str(bit) for bit in self.y)


def n_actions(n_caps: int) -> int:
    return 2 ** n_caps


def action_from_index(index: int, n_caps: int) -> Action:
    """
    Decode an action index.

    Raises:
        ValueError: If the index is outside [0, 2^n_caps)
    """
    index = int(index)
    if not 0 <= index < n_actions(n_caps):
        raise ValueError(f"action index {index} outside [0, {n_actions(n_caps)})")
    y = tuple((index >> k) & 1 for k in range(n_caps))
    return Action(y=y, index=index)


def action_from_y(y) -> Action:
    """
    Encode a binary commitment vector.

    Raises:
        ValueError: If y is not binary
    """
    y = np.asarray(y)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError(f"commitment must be binary, got {y}")
    bits = tuple(int(v) for v in y)
    index = sum(bit << k for k, bit in enumerate(bits))
    return Action(y=bits, index=index)


def action_from_bits(bits: str, n_caps: int) -> Action:
    """
    Parse a bit string such as '101' (capacitor 1 first).

    Raises:
        ValueError: On a wrong length or a character other than 0/1
    """
    bits = bits.strip()
    if len(bits) != n_caps or set(bits) - {"0", "1"}:
        raise ValueError(f"expected a {n_caps}-character bit string of 0/1, got '{bits}'")
    return action_from_y([int(ch) for ch in bits])


def all_actions(n_caps: int) -> List[Action]:
    return [action_from_index(index, n_caps) for index in range(n_actions(n_caps))]
