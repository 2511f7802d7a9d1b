"""Scalar training objectives and their exact gradients w.r.t. predictions.

Every function returns (loss, gradient) where the gradient is taken with
respect to the probability vector(s) it consumed, so the caller can push
it through the network with ``mlp.backward``. Probabilities are clamped
to [1e-7, 1 - 1e-7] at evaluation time only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PROB_CLAMP = 1e-7


@dataclass
class FairnessSpec:
    """Which encoded columns act as fairness proxies, and how strongly.

    ``lambdas`` defaults to uniform 1/K over the K related columns; ``eta``
    scales the whole fairness term against the classification term.
    """

    related_columns: list[int]
    eta: float = 0.0
    lambdas: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if not self.lambdas:
            k = len(self.related_columns)
            self.lambdas = [1.0 / k] * k if k else []
        if len(self.lambdas) != len(self.related_columns):
            raise ValueError("lambdas must pair up with related_columns")
        if any(lam < 0 for lam in self.lambdas):
            raise ValueError("lambdas must be nonnegative")

    @classmethod
    def from_related_groups(
        cls,
        groups: list[list[int]],
        eta: float,
        split_by_group: bool = False,
    ) -> "FairnessSpec":
        """Uniform weights over encoded columns (default), or uniform over
        original features with each feature's share split across its
        one-hot columns (``split_by_group=True``)."""
        columns = [c for group in groups for c in group]
        if not split_by_group or not groups:
            return cls(related_columns=columns, eta=eta)
        lambdas = []
        for group in groups:
            share = 1.0 / (len(groups) * len(group))
            lambdas.extend(share for _ in group)
        return cls(related_columns=columns, eta=eta, lambdas=lambdas)


def _clamped(probs: np.ndarray) -> np.ndarray:
    return np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)


def bce(probs, labels) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its per-element d(loss)/d(prob)."""
    h = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if h.shape != y.shape:
        raise ValueError("probs and labels must have equal length")
    if h.size == 0:
        raise ValueError("empty input")
    n = h.size
    hc = _clamped(h)
    loss = float(np.mean(-y * np.log(hc) - (1.0 - y) * np.log(1.0 - hc)))
    grad = (hc - y) / (hc * (1.0 - hc)) / n
    return loss, grad


def weighted_bce(probs, labels, weights) -> tuple[float, np.ndarray]:
    """Importance-weighted cross-entropy: (1/n) sum_i w_i * BCE_i."""
    h = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if not (h.shape == y.shape == w.shape):
        raise ValueError("probs, labels, and weights must have equal length")
    if h.size == 0:
        raise ValueError("empty input")
    if (w < 0).any():
        raise ValueError("weights must be nonnegative")
    n = h.size
    hc = _clamped(h)
    per_element = -y * np.log(hc) - (1.0 - y) * np.log(1.0 - hc)
    loss = float(np.mean(w * per_element))
    grad = w * (hc - y) / (hc * (1.0 - hc)) / n
    return loss, grad


def fairness_corr(attribute_values, probs) -> tuple[float, np.ndarray]:
    """Absolute mean co-deviation between an attribute and predictions.

    loss = (1/n) |sum_i (a_i - mean a)(h_i - mean h)|. The subgradient of
    |.| at an inner sum of exactly 0 is taken as 0.
    """
    a = np.asarray(attribute_values, dtype=np.float64)
    h = np.asarray(probs, dtype=np.float64)
    if a.shape != h.shape:
        raise ValueError("attribute and probs must have equal length")
    if a.size == 0:
        raise ValueError("empty input")
    n = a.size
    a_dev = a - a.mean()
    inner = float(np.dot(a_dev, h - h.mean()))
    loss = abs(inner) / n
    # d(inner)/dh_j = (a_j - mean a): the centering term sums to zero.
    grad = np.sign(inner) * a_dev / n
    return loss, grad


def fairness_related(
    spec: FairnessSpec, feature_matrix, probs
) -> tuple[float, np.ndarray]:
    """Lambda-weighted sum of correlation penalties over related columns."""
    x = np.asarray(feature_matrix, dtype=np.float64)
    h = np.asarray(probs, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != h.shape[0]:
        raise ValueError("feature matrix rows must match probs length")
    if any(c < 0 or c >= x.shape[1] for c in spec.related_columns):
        raise ValueError("related column index out of range")
    loss = 0.0
    grad = np.zeros_like(h)
    for column, lam in zip(spec.related_columns, spec.lambdas):
        part, part_grad = fairness_corr(x[:, column], h)
        loss += lam * part
        grad += lam * part_grad
    return loss, grad


def hybrid_loss(
    source_probs,
    source_labels,
    weights,
    target_probs,
    target_feature_matrix,
    spec: FairnessSpec,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Weighted classification on source plus eta-scaled fairness on target.

    Returns (loss, d/d source_probs, d/d target_probs); the first term
    touches only the source gradient and the second only the target one.
    """
    clf_loss, clf_grad = weighted_bce(source_probs, source_labels, weights)
    if spec.eta == 0.0:
        return clf_loss, clf_grad, np.zeros_like(np.asarray(target_probs, dtype=np.float64))
    fair_loss, fair_grad = fairness_related(spec, target_feature_matrix, target_probs)
    return clf_loss + spec.eta * fair_loss, clf_grad, spec.eta * fair_grad
