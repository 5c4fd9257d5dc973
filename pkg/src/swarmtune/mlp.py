"""Small feedforward regression network trained with mini-batch SGD.

Weights are stored as ``(fan_in, fan_out)`` matrices so a batch ``X`` of
shape ``(n, input_dim)`` maps through ``X @ W + b``. The output layer is
linear; the loss is the mean over rows of the per-row squared error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .topology import NetworkTopology

Activation = Literal["relu", "tanh"]


class TrainingDivergence(ArithmeticError):
    def __init__(self, epoch: int, message: str = "non-finite loss"):
        super().__init__(f"{message} at epoch {epoch}")
        self.epoch = epoch


@dataclass
class MLPModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: Activation = "relu"

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ValueError(f"layer {i}: bias shape {b.shape} does not match weight {W.shape}")
            if i and W.shape[0] != self.weights[i - 1].shape[1]:
                raise ValueError(f"layer {i}: fan-in {W.shape[0]} breaks the shape chain")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def num_hidden_layers(self) -> int:
        return len(self.weights) - 1

    def num_parameters(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def copy(self) -> "MLPModel":
        return MLPModel([W.copy() for W in self.weights], [b.copy() for b in self.biases],
                        self.activation)

    def to_json_dict(self) -> dict:
        """Shapes plus row-major flattened parameters."""
        return {
            "activation": self.activation,
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "layers": [
                {"weight_shape": list(W.shape), "weight": W.ravel(order="C").tolist(),
                 "bias": b.tolist()}
                for W, b in zip(self.weights, self.biases)
            ],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "MLPModel":
        weights = [np.asarray(layer["weight"], dtype=float).reshape(layer["weight_shape"])
                   for layer in data["layers"]]
        biases = [np.asarray(layer["bias"], dtype=float) for layer in data["layers"]]
        return cls(weights, biases, data["activation"])

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 20
    batch_size: int = 64
    seed: int = 0
    init_scale_mode: Literal["fan_in_uniform"] = "fan_in_uniform"
    activation: Activation = "relu"
    # compute precision for training; float32 roughly halves wall time
    dtype: Literal["float64", "float32"] = "float64"

    def __post_init__(self):
        if self.dtype not in ("float64", "float32"):
            raise ValueError(f"unsupported dtype {self.dtype!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.init_scale_mode != "fan_in_uniform":
            raise ValueError(f"unknown init_scale_mode {self.init_scale_mode!r}")


@dataclass
class TrainHistory:
    losses: list[float] = field(default_factory=list)


def layer_sizes(topology: NetworkTopology, input_dim: int, output_dim: int) -> list[int]:
    return [input_dim] + [topology.neurons_per_layer] * topology.num_hidden_layers + [output_dim]


def build(topology: NetworkTopology, input_dim: int, output_dim: int, seed: int,
          activation: Activation = "relu") -> MLPModel:
    """Weights ~ U[-s, s] with ``s = sqrt(6 / (fan_in + fan_out))``, zero biases."""
    if input_dim < 1 or output_dim < 1:
        raise ValueError("input_dim and output_dim must be positive")
    if topology.num_hidden_layers < 0 or topology.neurons_per_layer < 1:
        raise ValueError(f"invalid topology {topology}")
    rng = np.random.default_rng(seed)
    sizes = layer_sizes(topology, input_dim, output_dim)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-s, s, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MLPModel(weights, biases, activation)


def _act(z, activation):
    return np.maximum(z, 0.0) if activation == "relu" else np.tanh(z)


def _as_batch(model: MLPModel, features) -> tuple[np.ndarray, bool]:
    X = np.asarray(features, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ValueError(f"expected {model.input_dim} features, got shape {np.shape(features)}")
    return X, single


def forward(model: MLPModel, features) -> np.ndarray:
    """Output for one feature vector, or a ``(n, output_dim)`` array for a batch."""
    X, single = _as_batch(model, features)
    a = X
    last = len(model.weights) - 1
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ W + b
        a = z if i == last else _act(z, model.activation)
    return a[0] if single else a


def loss(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {t.shape}")
    if p.size == 0:
        raise ValueError("empty input")
    if p.ndim == 1:
        return float(np.mean((p - t) ** 2))
    return float(np.mean(np.sum((p - t) ** 2, axis=tuple(range(1, p.ndim)))))


def _targets_2d(model: MLPModel, targets) -> np.ndarray:
    Y = np.asarray(targets, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[1] != model.output_dim:
        raise ValueError(f"expected {model.output_dim} target columns, got {Y.shape[1]}")
    return Y


def _backprop(weights, biases, X, Y, activation):
    """Unchecked forward/backward pass; returns (weight_grads, bias_grads, loss)."""
    n = X.shape[0]
    last = len(weights) - 1
    activations = [X]
    masks = []
    a = X
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = a @ W
        z += b
        if i < last:
            if activation == "relu":
                masks.append(z > 0)
                np.maximum(z, 0.0, out=z)
            else:
                np.tanh(z, out=z)
                masks.append(None)
        activations.append(z)
        a = z

    err = a - Y
    value = float(np.vdot(err, err)) / n
    delta = err * (2.0 / n)
    grads_w = [None] * len(weights)
    grads_b = [None] * len(weights)
    for i in range(last, -1, -1):
        grads_w[i] = activations[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i:
            delta = delta @ weights[i].T
            if activation == "relu":
                delta *= masks[i - 1]
            else:
                h = activations[i]
                delta *= 1.0 - h * h
    return grads_w, grads_b, value


def gradient(model: MLPModel, features, targets) -> tuple[list[np.ndarray], list[np.ndarray], float]:
    """Backpropagated gradients of the mean squared error.

    Returns ``(weight_grads, bias_grads, loss)``. Raises FloatingPointError
    if the loss or any gradient is not finite.
    """
    X, _ = _as_batch(model, features)
    Y = _targets_2d(model, targets)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    if Y.shape[0] != X.shape[0]:
        raise ValueError("features and targets differ in length")
    with np.errstate(over="ignore", invalid="ignore"):
        grads_w, grads_b, value = _backprop(model.weights, model.biases, X, Y, model.activation)
    if not np.isfinite(value):
        raise FloatingPointError("non-finite loss")
    if not all(np.all(np.isfinite(g)) for g in grads_w + grads_b):
        raise FloatingPointError("non-finite gradient")
    return grads_w, grads_b, value


def train(model: MLPModel, features, targets, config: TrainConfig
          ) -> tuple[MLPModel, TrainHistory]:
    """Mini-batch SGD; returns a trained copy and the per-epoch loss history.

    Each history entry is the size-weighted mean of the batch losses seen
    during that epoch. A fixed-seed permutation is drawn every epoch.
    Arithmetic runs in ``config.dtype``; the returned model is float64.
    """
    dtype = np.dtype(config.dtype)
    X = np.ascontiguousarray(features, dtype=dtype)
    Y = _targets_2d(model, targets).astype(dtype)
    n = X.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ValueError(f"expected {model.input_dim} features, got shape {X.shape}")
    if Y.shape[0] != n:
        raise ValueError("features and targets differ in length")
    weights = [W.astype(dtype) for W in model.weights]
    biases = [b.astype(dtype) for b in model.biases]
    lr = dtype.type(config.learning_rate)
    rng = np.random.default_rng(config.seed)
    history = TrainHistory()
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(config.epochs):
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, config.batch_size):
                idx = order[start:start + config.batch_size]
                gw, gb, value = _backprop(weights, biases, X[idx], Y[idx], model.activation)
                total += value * len(idx)
                for W, b, dW, db in zip(weights, biases, gw, gb):
                    W -= lr * dW
                    b -= lr * db
            epoch_loss = total / n
            if not np.isfinite(epoch_loss):
                raise TrainingDivergence(epoch)
            history.losses.append(epoch_loss)
    if not all(np.all(np.isfinite(W)) for W in weights):
        raise TrainingDivergence(config.epochs - 1, "non-finite parameters")
    trained = MLPModel([W.astype(float) for W in weights], [b.astype(float) for b in biases],
                       model.activation)
    return trained, history


def predict(model: MLPModel, features) -> np.ndarray | float:
    """First output component: a float for one row, an array for a batch."""
    out = forward(model, features)
    return float(out[0]) if out.ndim == 1 else out[:, 0]
