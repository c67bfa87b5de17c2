"""
Feed-forward Q-network in numpy with hand-written backpropagation.

Hidden layers use ReLU; the output layer is a logistic sigmoid scaled by
output_scale, so every prediction lies in (0, output_scale). Each network
carries its own target copy of the parameters.
"""
import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

Gradients = List[Tuple[np.ndarray, np.ndarray]]


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, 1.0, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class QNetwork:
    """
    Multi-layer perceptron mapping an MDP state to one Q-value per action.
    """

    def __init__(
        self,
        layer_sizes: Sequence[int],
        output_scale: float = 1.0,
        rng: Optional[np.random.Generator] = None
    ):
        """
        Initialize weights uniformly in +-sqrt(6 / (fan_in + fan_out)) and
        biases at zero; the target copy starts equal to the online weights.

        Args:
            layer_sizes: [input, hidden..., output]
            output_scale: Upper bound of the predicted Q-values
            rng: Generator used for the initial weights
        """
        if len(layer_sizes) < 2 or min(layer_sizes) < 1:
            raise ValueError(f"invalid layer sizes {list(layer_sizes)}")
        if output_scale <= 0:
            raise ValueError(f"output_scale must be positive, got {output_scale}")
        rng = rng if rng is not None else np.random.default_rng()
        self.layer_sizes = [int(size) for size in layer_sizes]
        self.output_scale = float(output_scale)
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            self.biases.append(np.zeros(fan_out))
        self.target_weights = [w.copy() for w in self.weights]
        self.target_biases = [b.copy() for b in self.biases]

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_parameters(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def _check_states(self, states: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        if states.shape[1] != self.n_inputs:
            raise ValueError(f"state has dimension {states.shape[1]}, network expects {self.n_inputs}")
        return states

    def _layers(self, target: bool) -> Tuple[List[np.ndarray], List[np.ndarray]]:
        if target:
            return self.target_weights, self.target_biases
        return self.weights, self.biases

    def _forward_memory(self, states: np.ndarray, target: bool = False):
        """Forward pass remembering pre-activations and activations."""
        weights, biases = self._layers(target)
        activations = [states]
        pre_activations = []
        a = states
        for layer, (W, b) in enumerate(zip(weights, biases)):
            z = a @ W.T + b
            pre_activations.append(z)
            if layer < len(weights) - 1:
                a = relu(z)
            else:
                a = self.output_scale * sigmoid(z)
            activations.append(a)
        return activations, pre_activations

    def forward(self, states: np.ndarray, target: bool = False) -> np.ndarray:
        """
        Predicted Q-values.

        Args:
            states: One state (1-D) or a batch (2-D, one row per state)
            target: Evaluate the target copy instead of the online weights

        Returns:
            Array of shape (n_outputs,) for one state, (batch, n_outputs) otherwise
        """
        single = np.ndim(states) == 1
        activations, _ = self._forward_memory(self._check_states(states), target)
        out = activations[-1]
        return out[0] if single else out

    def loss_and_grads(
        self,
        states: np.ndarray,
        actions: np.ndarray,
        targets: np.ndarray
    ) -> Tuple[float, Gradients]:
        """
        Loss (1/2M) sum_j (target_j - Q(s_j, a_j))^2 and its gradient.

        Only the output entry of the taken action receives error; targets
        are constants.

        Returns:
            Tuple (loss, [(dW, db) per layer])
        """
        states = self._check_states(states)
        actions = np.asarray(actions, dtype=int)
        targets = np.asarray(targets, dtype=float)
        M = states.shape[0]
        activations, pre_activations = self._forward_memory(states)
        out = activations[-1]
        rows = np.arange(M)
        error = targets - out[rows, actions]
        loss = float(0.5 * np.sum(error ** 2) / M)

        d_out = np.zeros_like(out)
        d_out[rows, actions] = -error / M
        # d(scale * sigmoid(z))/dz = out * (1 - out / scale)
        delta = d_out * out * (1.0 - out / self.output_scale)

        grads: Gradients = []
        for layer in range(len(self.weights) - 1, -1, -1):
            dW = delta.T @ activations[layer]
            db = delta.sum(axis=0)
            grads.append((dW, db))
            if layer > 0:
                delta = (delta @ self.weights[layer]) * relu_grad(pre_activations[layer - 1])
        grads.reverse()
        return loss, grads

    def loss(self, states: np.ndarray, actions: np.ndarray, targets: np.ndarray) -> float:
        states = self._check_states(states)
        out = self.forward(states)
        error = np.asarray(targets, dtype=float) - out[np.arange(states.shape[0]), np.asarray(actions, dtype=int)]
        return float(0.5 * np.sum(error ** 2) / states.shape[0])

    def apply_gradients(self, grads: Gradients, beta: float):
        for layer, (dW, db) in enumerate(grads):
            self.weights[layer] = self.weights[layer] - beta * dW
            self.biases[layer] = self.biases[layer] - beta * db

    def sync_target(self):
        self.target_weights = [w.copy() for w in self.weights]
        self.target_biases = [b.copy() for b in self.biases]

    def parameters_finite(self) -> bool:
        return all(np.all(np.isfinite(w)) and np.all(np.isfinite(b)) for w, b in zip(self.weights, self.biases))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "layer_sizes": self.layer_sizes,
            "output_scale": self.output_scale,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "target_weights": [w.tolist() for w in self.target_weights],
            "target_biases": [b.tolist() for b in self.target_biases],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "QNetwork":
        net = cls(data["layer_sizes"], data["output_scale"], rng=np.random.default_rng(0))
        net.weights = [np.array(w, dtype=float) for w in data["weights"]]
        net.biases = [np.array(b, dtype=float) for b in data["biases"]]
        net.target_weights = [np.array(w, dtype=float) for w in data["target_weights"]]
        net.target_biases = [np.array(b, dtype=float) for b in data["target_biases"]]
        return net


def q_forward(net, state: np.ndarray) -> np.ndarray:
    """
    Per-action Q-values of one state.

    Raises:
        ValueError: If the state dimension does not match the input layer
    """
    return net.forward(np.asarray(state, dtype=float).ravel())


def numerical_gradient(
    net: QNetwork,
    states: np.ndarray,
    actions: np.ndarray,
    targets: np.ndarray,
    eps: float = 1e-6
) -> Gradients:
    """Central finite differences of the batch loss with respect to every parameter."""
    grads: Gradients = []
    for layer in range(len(net.weights)):
        pair = []
        for params in (net.weights[layer], net.biases[layer]):
            grad = np.zeros_like(params)
            for idx in np.ndindex(params.shape):
                original = params[idx]
                params[idx] = original + eps
                plus = net.loss(states, actions, targets)
                params[idx] = original - eps
                minus = net.loss(states, actions, targets)
                params[idx] = original
                grad[idx] = (plus - minus) / (2.0 * eps)
            pair.append(grad)
        grads.append((pair[0], pair[1]))
    return grads
