"""Importance-weight estimation via a logistic source-vs-target discriminator.

The density ratio p_target(x) / p_source(x) at a source sample is read off
the discriminator's odds, corrected by the domain size ratio, clipped, and
mean-normalized so the weighted loss keeps a comparable scale.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .mlp import sigmoid


class DomainDiscriminator(BaseEstimator):
    """Logistic regression telling target (label 1) from source (label 0).

    Fit by full-batch gradient descent from zero initialization, which
    makes the fit fully deterministic; ``seed`` is kept for interface
    symmetry with the stochastic trainers.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    intercept_ : float
    loss_trace_ : list of per-epoch mean logistic loss, weakly decreasing
        for any sane learning rate on these problem sizes.
    """

    def __init__(self, epochs: int = 500, learning_rate: float = 0.1, seed: int = 0):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.seed = seed

    def fit(self, source_features, target_features) -> "DomainDiscriminator":
        xs = np.asarray(source_features, dtype=np.float64)
        xt = np.asarray(target_features, dtype=np.float64)
        if xs.ndim != 2 or xt.ndim != 2:
            raise ValueError("feature matrices must be 2-D")
        if xs.shape[0] == 0 or xt.shape[0] == 0:
            raise ValueError("both domains must be nonempty")
        if xs.shape[1] != xt.shape[1]:
            raise ValueError(
                f"feature dimensions differ: source {xs.shape[1]}, target {xt.shape[1]}"
            )
        x = np.vstack([xs, xt])
        y = np.concatenate([np.zeros(len(xs)), np.ones(len(xt))])
        n = len(y)

        w = np.zeros(x.shape[1], dtype=np.float64)
        b = 0.0
        trace = []
        for _ in range(self.epochs):
            z = x @ w + b
            p = sigmoid(z)
            grad_z = (p - y) / n
            w = w - self.learning_rate * (x.T @ grad_z)
            b = b - self.learning_rate * grad_z.sum()
            z = x @ w + b
            # stable mean logistic loss at the updated parameters
            loss = float(np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))))
            trace.append(loss)
        self.coef_ = w
        self.intercept_ = b
        self.loss_trace_ = trace
        return self

    def decision_function(self, features) -> np.ndarray:
        if not hasattr(self, "coef_"):
            raise NotFittedError("DomainDiscriminator is not fitted")
        x = np.asarray(features, dtype=np.float64)
        return x @ self.coef_ + self.intercept_

    def predict_target_proba(self, features) -> np.ndarray:
        """sigma(f(x)): estimated probability that x came from the target."""
        return sigmoid(self.decision_function(features))


@dataclass
class ImportanceWeights:
    """Per-source-sample density-ratio estimates, clipped and normalized."""

    values: np.ndarray
    clip_ceiling: float
    normalized: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("importance weights must be finite")
        if (self.values < 0).any():
            raise ValueError("importance weights must be nonnegative")

    def __len__(self) -> int:
        return len(self.values)


def estimate_weights(
    model: DomainDiscriminator,
    source_features,
    n_source: int,
    n_target: int,
    clip_ceiling: float = 10.0,
) -> ImportanceWeights:
    """Density ratios for the source samples from the discriminator odds.

    w(x) = sigma(f(x)) / (1 - sigma(f(x))) * (n_source / n_target), then
    clipped at ``clip_ceiling``, then rescaled to mean 1. A probability
    numerically equal to 1 saturates at the ceiling rather than erroring.
    """
    if clip_ceiling <= 0:
        raise ValueError("clip_ceiling must be positive")
    scores = model.decision_function(source_features)
    if not np.all(np.isfinite(scores)):
        raise ValueError("discriminator produced non-finite outputs")
    p = sigmoid(scores)
    with np.errstate(divide="ignore"):
        raw = (p / (1.0 - p)) * (n_source / n_target)
    clipped = np.minimum(raw, clip_ceiling)
    mean = clipped.mean()
    if mean == 0.0:
        raise ValueError("all importance weights are zero; cannot normalize")
    return ImportanceWeights(
        values=clipped / mean, clip_ceiling=clip_ceiling, normalized=True
    )


def importance_weights_for_split(
    source_features,
    target_features,
    clip_ceiling: float = 10.0,
    epochs: int = 500,
    learning_rate: float = 0.1,
    seed: int = 0,
) -> tuple[ImportanceWeights, DomainDiscriminator]:
    """Fit the discriminator and estimate source weights in one call."""
    disc = DomainDiscriminator(epochs=epochs, learning_rate=learning_rate, seed=seed)
    disc.fit(source_features, target_features)
    weights = estimate_weights(
        disc,
        source_features,
        n_source=np.asarray(source_features).shape[0],
        n_target=np.asarray(target_features).shape[0],
        clip_ceiling=clip_ceiling,
    )
    return weights, disc


def unit_weights(n: int) -> ImportanceWeights:
    """All-ones weights; reduces the weighted loss to the plain one."""
    return ImportanceWeights(values=np.ones(n), clip_ceiling=np.inf, normalized=True)


def export_weights_csv(weights: ImportanceWeights, path) -> None:
    """Write (row_index, weight) rows for inspection."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row_index", "weight"])
        for i, value in enumerate(weights.values):
            writer.writerow([i, repr(float(value))])
