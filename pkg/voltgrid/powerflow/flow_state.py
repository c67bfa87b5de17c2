"""
Power flow solution container.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class FlowState:
    """
    Squared voltages and line flows of one operating point.

    All vectors have length N; entry i-1 belongs to bus i and to the line
    joining bus i to its parent. ell is zero under the linear model.
    """
    v: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    ell: np.ndarray
    v0: float
    iterations: Optional[int] = None

    def parent_voltages(self, parent: np.ndarray) -> np.ndarray:
        """Squared voltage at the sending end of every line."""
        full = np.concatenate(([self.v0], self.v))
        return full[parent[1:]]

    def deviation(self) -> float:
        """Sum of squared deviations ||v - v0 1||^2."""
        return float(np.sum((self.v - self.v0) ** 2))
