"""Test-set metrics: AUC, demographic parity distance, seed aggregation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def auc(scores, labels) -> float:
    """Probability a random positive outranks a random negative; ties 1/2.

    Computed via the rank-statistic form with average ranks for tied
    scores, which is exactly the pairwise-comparison definition.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined: both classes must be present")

    n = s.size
    order = np.argsort(s, kind="mergesort")
    s_sorted = s[order]
    new_group = np.concatenate([[True], s_sorted[1:] != s_sorted[:-1]])
    group_id = np.cumsum(new_group) - 1
    counts = np.bincount(group_id)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    avg_rank = starts + (counts + 1) / 2.0  # 1-based midrank per tie group
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = avg_rank[group_id]

    pos_rank_sum = ranks[y == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def delta_dp(predicted_labels, protected) -> float:
    """Absolute gap in positive-prediction rates between the two groups."""
    yhat = np.asarray(predicted_labels, dtype=np.float64)
    a = np.asarray(protected)
    if yhat.shape != a.shape or yhat.ndim != 1:
        raise ValueError("predictions and protected must be equal-length vectors")
    in_group = a == 1
    if not in_group.any() or in_group.all():
        raise ValueError("DP undefined: a protected group is empty")
    return float(abs(yhat[in_group].mean() - yhat[~in_group].mean()))


@dataclass
class ExperimentResult:
    """Per-seed (AUC, delta_DP) pairs plus their means and spreads."""

    approach: str
    eta: float
    per_seed: list[tuple[float, float]]
    seeds: list[int] = field(default_factory=list)
    mean_auc: float = 0.0
    mean_delta_dp: float = 0.0
    std_auc: float = 0.0
    std_delta_dp: float = 0.0

    def to_dict(self) -> dict:
        return {
            "approach": self.approach,
            "eta": self.eta,
            "seeds": list(self.seeds),
            "per_seed": [
                {"seed": s, "auc": a, "delta_dp": d}
                for s, (a, d) in zip(
                    self.seeds or range(len(self.per_seed)), self.per_seed
                )
            ],
            "mean_auc": self.mean_auc,
            "std_auc": self.std_auc,
            "mean_delta_dp": self.mean_delta_dp,
            "std_delta_dp": self.std_delta_dp,
        }


def aggregate(
    per_seed: list[tuple[float, float]],
    approach: str = "",
    eta: float = 0.0,
    seeds: list[int] | None = None,
) -> ExperimentResult:
    """Arithmetic mean and population standard deviation per metric."""
    if not per_seed:
        raise ValueError("no results to aggregate")
    aucs = np.asarray([p[0] for p in per_seed], dtype=np.float64)
    dps = np.asarray([p[1] for p in per_seed], dtype=np.float64)
    return ExperimentResult(
        approach=approach,
        eta=eta,
        per_seed=[(float(a), float(d)) for a, d in per_seed],
        seeds=list(seeds) if seeds is not None else list(range(len(per_seed))),
        mean_auc=float(aucs.mean()),
        mean_delta_dp=float(dps.mean()),
        std_auc=float(aucs.std()),
        std_delta_dp=float(dps.std()),
    )
