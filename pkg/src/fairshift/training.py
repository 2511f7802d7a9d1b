"""Minibatch training loop: Adam updates, dual source/target batch streams,
early stopping on total validation loss, and the multi-seed protocol.

One run is single-threaded and fully deterministic given its config and
data; distinct seeds or sweep cells can safely run in parallel since they
share only read-only dataset views.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .data import DomainSplit, drop_related, drop_related_split
from .density_ratio import ImportanceWeights
from .losses import FairnessSpec, bce, fairness_related, hybrid_loss, weighted_bce
from .metrics import auc, delta_dp
from .mlp import GradientSet, MlpModel, backward, forward, init_mlp

APPROACHES = {
    "vanilla": {},
    "related_removed": {"drop_related": True},
    "shift_adapted": {"use_importance_weights": True},
    "fair_related": {"use_fairness": True},
    "hybrid": {"use_importance_weights": True, "use_fairness": True},
}

FAIRNESS_APPROACHES = ("fair_related", "hybrid")


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 256
    max_epochs: int = 200
    patience: int = 5
    seed: int = 0
    eta: float = 0.0
    use_importance_weights: bool = False
    use_fairness: bool = False
    drop_related: bool = False

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")

    @classmethod
    def for_approach(cls, approach: str, eta: float = 0.0, **overrides) -> "TrainConfig":
        if approach not in APPROACHES:
            raise ValueError(
                f"unknown approach {approach!r}; expected one of {sorted(APPROACHES)}"
            )
        flags = dict(APPROACHES[approach])
        effective_eta = eta if approach in FAIRNESS_APPROACHES else 0.0
        return cls(eta=effective_eta, **flags, **overrides)


@dataclass
class TrainHistory:
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0
    best_parameters: MlpModel | None = None


class EarlyStopper:
    """Halt after ``patience`` consecutive epochs without a new minimum."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = np.inf
        self.best_epoch = 0
        self.epochs_since_best = 0

    def update(self, epoch: int, loss: float) -> bool:
        """Record an epoch's validation loss; True means stop now."""
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_epoch = epoch
            self.epochs_since_best = 0
            return False
        self.epochs_since_best += 1
        return self.epochs_since_best >= self.patience


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray]) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            t=0,
        )


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[list[np.ndarray], AdamState]:
    """One Adam update with bias correction; returns fresh arrays."""
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient; training aborted")
    t = state.t + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        new_params.append(p - learning_rate * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(m=new_m, v=new_v, t=t)


def _model_params(model: MlpModel) -> list[np.ndarray]:
    out = []
    for w, b in zip(model.weights, model.biases):
        out.extend((w, b))
    return out


def _params_to_model(params: list[np.ndarray], dims: list[int]) -> MlpModel:
    weights = params[0::2]
    biases = params[1::2]
    return MlpModel(layer_dims=dims, weights=list(weights), biases=list(biases))


def _grad_params(grads: GradientSet) -> list[np.ndarray]:
    out = []
    for w, b in zip(grads.weights, grads.biases):
        out.extend((w, b))
    return out


def validation_total_loss(
    model: MlpModel, split: DomainSplit, eta: float, fairness: FairnessSpec | None
) -> float:
    """Unweighted BCE on target validation plus the eta-scaled fairness term."""
    val = split.target_validation
    probs = forward(model, val.features)
    total, _ = bce(probs, val.labels)
    if eta > 0.0 and fairness is not None:
        fair, _ = fairness_related(fairness, val.features, probs)
        total += eta * fair
    return total


def train(
    config: TrainConfig,
    split: DomainSplit,
    weights: ImportanceWeights | np.ndarray | None = None,
    fairness: FairnessSpec | None = None,
) -> tuple[MlpModel, TrainHistory]:
    """Fit the MLP per the configured approach; return best-epoch parameters.

    Each epoch shuffles the source rows; every step draws one source
    batch for the classification term and, when fairness is on, an
    equal-size with-replacement batch from the target validation features
    for the fairness term. Early stopping watches the total validation
    loss and restores the best snapshot.
    """
    if config.drop_related and config.use_fairness:
        raise ValueError("cannot penalize related features after dropping them")
    if config.drop_related:
        split = drop_related_split(split)

    source = split.source_train
    val = split.target_validation
    if source.n_rows == 0 or val.n_rows == 0:
        raise ValueError("empty partition")

    if config.use_importance_weights:
        if weights is None:
            raise ValueError("importance weights required for this configuration")
        w = weights.values if isinstance(weights, ImportanceWeights) else np.asarray(weights)
        if len(w) != source.n_rows:
            raise ValueError("one importance weight per source-train row required")
    else:
        w = np.ones(source.n_rows, dtype=np.float64)

    if config.use_fairness:
        if fairness is None:
            fairness = FairnessSpec.from_related_groups(
                source.related_indices, eta=config.eta
            )
        if not fairness.related_columns:
            raise ValueError("fairness requested but no related columns registered")
        eta = fairness.eta
    else:
        fairness = None
        eta = 0.0

    model = init_mlp(source.n_features, config.seed)
    params = _model_params(model)
    state = AdamState.for_params(params)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    target_pool = val.features

    stopper = EarlyStopper(config.patience)
    history = TrainHistory()
    best_model = model.copy()

    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(source.n_rows)
        step_losses = []
        for start in range(0, source.n_rows, config.batch_size):
            rows = perm[start : start + config.batch_size]
            xb = source.features[rows]
            yb = source.labels[rows]
            wb = w[rows]
            probs = forward(model, xb)
            if fairness is not None:
                t_rows = rng.integers(0, target_pool.shape[0], size=len(rows))
                xt = target_pool[t_rows]
                t_probs = forward(model, xt)
                loss, g_src, g_tgt = hybrid_loss(probs, yb, wb, t_probs, xt, fairness)
                grads = backward(model, xb, g_src) + backward(model, xt, g_tgt)
            else:
                loss, g_src = weighted_bce(probs, yb, wb)
                grads = backward(model, xb, g_src)
            if not np.isfinite(loss):
                raise FloatingPointError("non-finite training loss; aborted")
            params, state = adam_step(
                params, _grad_params(grads), state, config.learning_rate
            )
            model = _params_to_model(params, model.layer_dims)
            step_losses.append(loss)
        if not model.all_finite():
            raise FloatingPointError("non-finite model parameter; training aborted")

        history.train_losses.append(float(np.mean(step_losses)))
        val_loss = validation_total_loss(model, split, eta, fairness)
        if not np.isfinite(val_loss):
            raise FloatingPointError("non-finite validation loss; aborted")
        history.val_losses.append(val_loss)
        improved = val_loss < stopper.best_loss
        stop = stopper.update(epoch, val_loss)
        if improved:
            best_model = model.copy()
        if stop:
            history.stopped_epoch = epoch
            break
    else:
        history.stopped_epoch = config.max_epochs

    history.best_epoch = stopper.best_epoch
    history.best_parameters = best_model
    return best_model, history


def evaluate_model(
    model: MlpModel, dataset, threshold: float = 0.5
) -> tuple[float, float]:
    """(AUC, delta_DP) on one dataset; predictions thresholded for DP."""
    probs = forward(model, dataset.features)
    preds = (probs >= threshold).astype(np.int64)
    return auc(probs, dataset.labels), delta_dp(preds, dataset.protected)


def run_repeats(
    config: TrainConfig,
    split: DomainSplit,
    weights: ImportanceWeights | np.ndarray | None,
    fairness: FairnessSpec | None,
    seeds: list[int],
    threshold: float = 0.5,
) -> list[tuple[MlpModel, tuple[float, float]]]:
    """Independent runs differing only in seed, each scored on target test."""
    if len(set(seeds)) != len(seeds):
        raise ValueError("seeds must be distinct")
    test = drop_related(split.target_test) if config.drop_related else split.target_test
    out = []
    for seed in seeds:
        model, _ = train(replace(config, seed=seed), split, weights, fairness)
        out.append((model, evaluate_model(model, test, threshold)))
    return out


def export_history_csv(history: TrainHistory, path) -> None:
    """Write (epoch, train_loss, val_loss) rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for i, (tr, va) in enumerate(zip(history.train_losses, history.val_losses), 1):
            writer.writerow([i, repr(tr), repr(va)])
