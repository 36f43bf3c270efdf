"""Multilayer perceptron regression trained by mini-batch SGD.

Hidden layers apply tanh or relu; the output layer is a single linear
unit. The forward/loss/gradient core is exposed as plain functions over
weight lists so gradients can be checked against finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .base import TrainingInfo, check_prediction_input, check_training_inputs

ACTIVATIONS = ("tanh", "relu")


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _activate_grad(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    return (z > 0.0).astype(np.float64)


def init_parameters(
    layer_sizes: list[int], rng: np.random.Generator
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases."""
    weights = []
    biases = []
    for fan_in, fan_out in zip(layer_sizes, layer_sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def forward(
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    activation: str,
    X: np.ndarray,
) -> np.ndarray:
    """Network output for each row of X (final layer linear)."""
    a = X
    last = len(weights) - 1
    for layer, (w, b) in enumerate(zip(weights, biases)):
        z = a @ w + b
        a = z if layer == last else _activate(z, activation)
    return a[:, 0]


def mse_loss(
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    activation: str,
    X: np.ndarray,
    y: np.ndarray,
) -> float:
    diff = forward(weights, biases, activation, X) - y
    return float(np.mean(diff * diff))


def loss_and_gradients(
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    activation: str,
    X: np.ndarray,
    y: np.ndarray,
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Mean-squared-error loss and its analytic gradients (backprop)."""
    n_layers = len(weights)
    last = n_layers - 1
    pre: list[np.ndarray] = []
    post: list[np.ndarray] = [X]
    a = X
    for layer, (w, b) in enumerate(zip(weights, biases)):
        z = a @ w + b
        pre.append(z)
        a = z if layer == last else _activate(z, activation)
        post.append(a)

    out = post[-1][:, 0]
    diff = out - y
    loss = float(np.mean(diff * diff))

    grad_w = [np.empty_like(w) for w in weights]
    grad_b = [np.empty_like(b) for b in biases]
    delta = (2.0 * diff / y.size)[:, None]
    for layer in range(last, -1, -1):
        grad_w[layer] = post[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ weights[layer].T) * _activate_grad(pre[layer - 1], activation)
    return loss, grad_w, grad_b


@dataclass(frozen=True)
class MlpModel:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    activation: str
    info: TrainingInfo

    family = "MLP"

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = check_prediction_input(X, self.weights[0].shape[0])
        return forward(list(self.weights), list(self.biases), self.activation, X)

    def to_dict(self) -> dict:
        return {
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "activation": self.activation,
            "info": self.info.to_dict(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "MlpModel":
        return cls(
            weights=tuple(np.asarray(w, dtype=np.float64) for w in raw["weights"]),
            biases=tuple(np.asarray(b, dtype=np.float64) for b in raw["biases"]),
            activation=str(raw["activation"]),
            info=TrainingInfo.from_dict(raw["info"]),
        )


def train_mlp(
    X: np.ndarray,
    y: np.ndarray,
    hidden_sizes: list[int] | tuple[int, ...] = (16,),
    activation: str = "tanh",
    learning_rate: float = 1e-2,
    epochs: int = 100,
    batch_size: int = 32,
    seed: int = 0,
) -> MlpModel:
    """Seeded mini-batch SGD; an empty hidden list trains a linear model.

    The loss trace holds the full-data MSE before training (index 0) and
    after every epoch. A non-finite loss aborts with a diagnostic rather
    than returning garbage weights.
    """
    X, y = check_training_inputs(X, y)
    hidden = [int(h) for h in hidden_sizes]
    if any(h < 1 for h in hidden):
        raise ValueError(f"hidden layer sizes must be positive, got {hidden}")
    if activation not in ACTIVATIONS:
        raise ValueError(f"activation must be one of {ACTIVATIONS}, got {activation!r}")
    if learning_rate <= 0.0 or epochs < 0 or batch_size < 1:
        raise ValueError("learning_rate must be positive, epochs >= 0, batch_size >= 1")

    rng = np.random.default_rng(seed)
    layer_sizes = [X.shape[1], *hidden, 1]
    weights, biases = init_parameters(layer_sizes, rng)

    n = y.size
    trace = [mse_loss(weights, biases, activation, X, y)]
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = order[start : start + batch_size]
            _, grad_w, grad_b = loss_and_gradients(
                weights, biases, activation, X[batch], y[batch]
            )
            for layer in range(len(weights)):
                weights[layer] -= learning_rate * grad_w[layer]
                biases[layer] -= learning_rate * grad_b[layer]
        loss = mse_loss(weights, biases, activation, X, y)
        if not math.isfinite(loss):
            raise RuntimeError(
                f"training diverged at epoch {epoch + 1}: loss is non-finite"
                f" (learning_rate {learning_rate} too high?)"
            )
        trace.append(loss)

    info = TrainingInfo(
        hyperparams={
            "hidden_sizes": hidden,
            "activation": activation,
            "learning_rate": learning_rate,
            "epochs": epochs,
            "batch_size": batch_size,
            "seed": seed,
        },
        n_iter=epochs,
        final_train_loss=trace[-1],
        converged=True,
        trace=tuple(trace),
    )
    return MlpModel(
        weights=tuple(weights),
        biases=tuple(biases),
        activation=activation,
        info=info,
    )
