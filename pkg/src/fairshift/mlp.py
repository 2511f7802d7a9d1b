"""Hand-differentiated multilayer perceptron: two rectifier hidden layers
(64 and 32 units) and a sigmoid output head.

Forward/backward are exact for this architecture family; the
finite-difference audit provides the independent check that the analytic
gradients match central differences. All arithmetic is float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

HIDDEN_DIMS = (64, 32)


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class MlpModel:
    """Layer weights and biases; ``weights[l]`` has shape (dims[l+1], dims[l])."""

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        dims = self.layer_dims
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[layer + 1], dims[layer]):
                raise ValueError(
                    f"layer {layer} weight shape {w.shape} breaks the chain "
                    f"{dims[layer + 1]}x{dims[layer]}"
                )
            if b.shape != (dims[layer + 1],):
                raise ValueError(f"layer {layer} bias shape {b.shape} is wrong")

    @property
    def feature_dim(self) -> int:
        return self.layer_dims[0]

    def copy(self) -> "MlpModel":
        return MlpModel(
            layer_dims=list(self.layer_dims),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def all_finite(self) -> bool:
        return all(np.isfinite(w).all() for w in self.weights) and all(
            np.isfinite(b).all() for b in self.biases
        )


@dataclass
class GradientSet:
    """Per-parameter gradients, shape-congruent with an :class:`MlpModel`."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __add__(self, other: "GradientSet") -> "GradientSet":
        return GradientSet(
            weights=[a + b for a, b in zip(self.weights, other.weights)],
            biases=[a + b for a, b in zip(self.biases, other.biases)],
        )

    def scaled(self, factor: float) -> "GradientSet":
        return GradientSet(
            weights=[factor * w for w in self.weights],
            biases=[factor * b for b in self.biases],
        )


def init_mlp(feature_dim: int, seed: int) -> MlpModel:
    """Glorot-uniform weights from a seeded generator; zero biases."""
    if feature_dim < 1:
        raise ValueError("feature_dim must be at least 1")
    dims = [feature_dim, *HIDDEN_DIMS, 1]
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return MlpModel(layer_dims=dims, weights=weights, biases=biases)


def _forward_cached(model: MlpModel, batch: np.ndarray):
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != model.feature_dim:
        raise ValueError(
            f"batch width {batch.shape[-1] if batch.ndim == 2 else '?'} does not "
            f"match feature_dim {model.feature_dim}"
        )
    activations = [batch]
    pre = []
    a = batch
    last = len(model.weights) - 1
    for layer, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w.T + b
        pre.append(z)
        a = sigmoid(z) if layer == last else np.maximum(z, 0.0)
        activations.append(a)
    return activations, pre


def forward(model: MlpModel, batch: np.ndarray) -> np.ndarray:
    """Per-row probabilities h(x); rows are independent."""
    activations, _ = _forward_cached(model, batch)
    return activations[-1][:, 0]


def backward(
    model: MlpModel, batch: np.ndarray, output_grads: np.ndarray
) -> GradientSet:
    """Exact gradients of sum_i output_grads[i] * h(x_i) w.r.t. parameters.

    The rectifier subgradient at 0 is taken as 0.
    """
    output_grads = np.asarray(output_grads, dtype=np.float64)
    activations, pre = _forward_cached(model, batch)
    if output_grads.shape != (batch.shape[0],):
        raise ValueError("output_grads must have one entry per batch row")

    h = activations[-1][:, 0]
    delta = (output_grads * h * (1.0 - h))[:, None]  # through the sigmoid head
    grad_w = [np.empty(0)] * len(model.weights)
    grad_b = [np.empty(0)] * len(model.biases)
    for layer in range(len(model.weights) - 1, -1, -1):
        grad_w[layer] = delta.T @ activations[layer]
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ model.weights[layer]) * (pre[layer - 1] > 0.0)
    return GradientSet(weights=grad_w, biases=grad_b)


def finite_difference_audit(
    model: MlpModel,
    loss_evaluator,
    analytic: GradientSet,
    step: float = 1e-5,
) -> float:
    """Max relative disagreement between central differences and ``analytic``.

    ``loss_evaluator`` maps a model to a scalar loss; every parameter is
    perturbed by ±step. The per-parameter relative error is
    |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    """
    if step <= 0:
        raise ValueError("step must be positive")

    worst = 0.0
    probe = model.copy()

    def central(arr: np.ndarray, grads: np.ndarray) -> float:
        local_worst = 0.0
        flat = arr.reshape(-1)
        gflat = grads.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            up = loss_evaluator(probe)
            flat[k] = orig - step
            down = loss_evaluator(probe)
            flat[k] = orig
            numeric = (up - down) / (2.0 * step)
            denom = max(1e-8, abs(gflat[k]) + abs(numeric))
            local_worst = max(local_worst, abs(gflat[k] - numeric) / denom)
        return local_worst

    for layer in range(len(probe.weights)):
        worst = max(worst, central(probe.weights[layer], analytic.weights[layer]))
        worst = max(worst, central(probe.biases[layer], analytic.biases[layer]))
    return worst


def save_model(model: MlpModel, path) -> None:
    """JSON parameter dump, layer-ordered, row-major."""
    doc = {
        "layer_dims": model.layer_dims,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path) -> MlpModel:
    with open(path) as fh:
        doc = json.load(fh)
    return MlpModel(
        layer_dims=list(doc["layer_dims"]),
        weights=[np.asarray(w, dtype=np.float64) for w in doc["weights"]],
        biases=[np.asarray(b, dtype=np.float64) for b in doc["biases"]],
    )
