"""Input validation helpers shared by the estimator-facing API."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array


def check_features(X, name: str = "X") -> np.ndarray:
    """Dense finite 2-D float64 matrix."""
    arr = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True)
    if arr.shape[0] == 0:
        raise ValueError(f"{name} has no rows")
    return arr


def check_binary_labels(y, n_rows: int, name: str = "y") -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim != 1 or arr.shape[0] != n_rows:
        raise ValueError(f"{name} must be a vector with one entry per row")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0 and 1")
    return arr.astype(np.int64)


def check_column_indices(columns, n_features: int, name: str = "columns") -> list[int]:
    out = [int(c) for c in columns]
    if any(c < 0 or c >= n_features for c in out):
        raise ValueError(f"{name} contains an index outside [0, {n_features})")
    return out
