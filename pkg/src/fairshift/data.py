"""Dataset ingestion, encoding, and covariate-shift domain splitting.

The pipeline is: ``load_csv`` -> ``encode`` -> ``shift_split``. Encoding
one-hots categorical columns and passes numeric columns through; the
shift split standardizes numeric feature columns with statistics fit on
the source partition only, so nothing about the target distribution
leaks into the representation beyond the unlabeled-features assumption.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, asdict

import numpy as np

MISSING_MARKERS = ("?", "")


class EmptyFileError(ValueError):
    """Raised when a CSV file contains no data rows."""


class RaggedRowError(ValueError):
    """Raised when a CSV row has a field count different from the header."""


class DegenerateShiftError(ValueError):
    """Raised when the shift rule puts all rows on one side of the median."""


@dataclass
class RawTable:
    """Parsed delimiter-separated data before encoding.

    ``columns[j]`` holds floats (numeric column) or stripped strings, with
    ``None`` for missing entries. ``dropped_rows`` counts rows removed
    because of missing values in spec-referenced columns.
    """

    column_names: list[str]
    columns: list[list]
    is_numeric: list[bool]
    dropped_rows: int = 0

    @property
    def row_count(self) -> int:
        return len(self.columns[0]) if self.columns else 0

    def column(self, name: str) -> list:
        try:
            return self.columns[self.column_names.index(name)]
        except ValueError:
            raise KeyError(f"no such column: {name!r}") from None

    def numeric_values(self, name: str) -> np.ndarray:
        values = self.column(name)
        if not self.is_numeric[self.column_names.index(name)]:
            raise ValueError(f"column {name!r} is not numeric")
        return np.asarray(values, dtype=np.float64)


@dataclass
class EncodingSpec:
    """Declares how a raw table maps to model inputs, label, and metadata.

    The protected column is never a model input: it feeds only the
    per-row protected vector used at evaluation time. Related feature
    names must name actual feature columns.
    """

    numeric_columns: list[str]
    categorical_columns: list[str]
    label_column: str
    label_rule: dict
    protected_column: str
    protected_rule: dict
    related_features: list[str]
    shift_column: str

    def __post_init__(self):
        feats = set(self.numeric_columns) | set(self.categorical_columns)
        if len(self.numeric_columns) + len(self.categorical_columns) != len(feats):
            raise ValueError("numeric and categorical column lists overlap")
        trio = {self.label_column, self.protected_column, self.shift_column}
        if len(trio) != 3:
            raise ValueError(
                "label_column, protected_column, and shift_column must be distinct"
            )
        if self.protected_column in feats:
            raise ValueError(
                "protected_column must not appear among the feature columns"
            )
        if self.label_column in feats:
            raise ValueError("label_column must not appear among the feature columns")
        missing = [f for f in self.related_features if f not in feats]
        if missing:
            raise ValueError(f"related features not among feature columns: {missing}")

    def referenced_columns(self) -> list[str]:
        """All raw column names this spec reads, in a stable order."""
        seen: dict[str, None] = {}
        for name in (
            self.numeric_columns
            + self.categorical_columns
            + [self.label_column, self.protected_column, self.shift_column]
        ):
            seen.setdefault(name)
        return list(seen)

    @classmethod
    def from_json(cls, document: str | dict) -> "EncodingSpec":
        data = json.loads(document) if isinstance(document, str) else dict(document)
        expected = {
            "numeric_columns",
            "categorical_columns",
            "label_column",
            "label_rule",
            "protected_column",
            "protected_rule",
            "related_features",
            "shift_column",
        }
        unknown = set(data) - expected
        if unknown:
            raise ValueError(f"unknown EncodingSpec keys: {sorted(unknown)}")
        absent = expected - set(data)
        if absent:
            raise ValueError(f"missing EncodingSpec keys: {sorted(absent)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


@dataclass
class TabularDataset:
    """Encoded feature matrix with labels, protected attribute, and the
    related-feature registry.

    ``related_indices`` groups encoded column indices by the related
    feature they came from; ``numeric_indices`` lists the encoded columns
    eligible for standardization (one-hot columns are left alone).
    """

    features: np.ndarray
    labels: np.ndarray
    protected: np.ndarray
    feature_map: list[str]
    related_indices: list[list[int]]
    related_names: list[str] = field(default_factory=list)
    numeric_indices: list[int] = field(default_factory=list)
    row_ids: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.protected = np.asarray(self.protected, dtype=np.int64)
        n, d = self.features.shape
        if not np.all(np.isfinite(self.features)):
            raise ValueError("feature matrix contains non-finite entries")
        if len(self.labels) != n or len(self.protected) != n:
            raise ValueError("labels/protected length does not match feature rows")
        if len(self.feature_map) != d:
            raise ValueError("feature_map length does not match feature columns")
        flat = [i for group in self.related_indices for i in group]
        if len(set(flat)) != len(flat):
            raise ValueError("related index groups are not disjoint")
        if any(i < 0 or i >= d for i in flat):
            raise ValueError("related index out of range")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def related_columns_flat(self) -> list[int]:
        return [i for group in self.related_indices for i in group]

    def take(self, indices: np.ndarray) -> "TabularDataset":
        """Row subset sharing the column metadata."""
        return TabularDataset(
            features=self.features[indices],
            labels=self.labels[indices],
            protected=self.protected[indices],
            feature_map=list(self.feature_map),
            related_indices=[list(g) for g in self.related_indices],
            related_names=list(self.related_names),
            numeric_indices=list(self.numeric_indices),
            row_ids=None if self.row_ids is None else self.row_ids[indices],
        )


@dataclass
class StandardizationStats:
    """Per-column (mean, scale) fit on source-train numeric columns.

    Zero-variance columns get scale 1 (centered only) and are listed in
    ``zero_variance``.
    """

    columns: list[int]
    mean: np.ndarray
    scale: np.ndarray
    zero_variance: list[int] = field(default_factory=list)

    def apply(self, features: np.ndarray) -> np.ndarray:
        out = features.copy()
        if self.columns:
            cols = np.asarray(self.columns, dtype=np.intp)
            out[:, cols] = (out[:, cols] - self.mean) / self.scale
        return out


@dataclass
class DomainSplit:
    """Source-train / target-validation / target-test partition.

    All three partitions carry features standardized with the same
    source-train statistics. Source rows had shift value strictly below
    ``shift_threshold``; target rows were at or above it.
    """

    source_train: TabularDataset
    target_validation: TabularDataset
    target_test: TabularDataset
    shift_threshold: float
    standardization_stats: StandardizationStats
    warnings: list[str] = field(default_factory=list)

    def save(self, path) -> None:
        """Serialize to ``.npz`` (arrays) next to the embedded metadata."""
        arrays = {}
        for tag, part in (
            ("train", self.source_train),
            ("val", self.target_validation),
            ("test", self.target_test),
        ):
            arrays[f"{tag}_features"] = part.features
            arrays[f"{tag}_labels"] = part.labels
            arrays[f"{tag}_protected"] = part.protected
            if part.row_ids is not None:
                arrays[f"{tag}_row_ids"] = part.row_ids
        proto = self.source_train
        meta = {
            "feature_map": proto.feature_map,
            "related_indices": proto.related_indices,
            "related_names": proto.related_names,
            "numeric_indices": proto.numeric_indices,
            "shift_threshold": self.shift_threshold,
            "stats_columns": self.standardization_stats.columns,
            "stats_mean": self.standardization_stats.mean.tolist(),
            "stats_scale": self.standardization_stats.scale.tolist(),
            "stats_zero_variance": self.standardization_stats.zero_variance,
            "warnings": self.warnings,
        }
        arrays["meta_json"] = np.frombuffer(
            json.dumps(meta).encode("utf-8"), dtype=np.uint8
        )
        np.savez_compressed(path, **arrays)

    @classmethod
    def load(cls, path) -> "DomainSplit":
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta_json"]).decode("utf-8"))
            parts = {}
            for tag in ("train", "val", "test"):
                parts[tag] = TabularDataset(
                    features=data[f"{tag}_features"],
                    labels=data[f"{tag}_labels"],
                    protected=data[f"{tag}_protected"],
                    feature_map=meta["feature_map"],
                    related_indices=meta["related_indices"],
                    related_names=meta["related_names"],
                    numeric_indices=meta["numeric_indices"],
                    row_ids=data[f"{tag}_row_ids"]
                    if f"{tag}_row_ids" in data
                    else None,
                )
        stats = StandardizationStats(
            columns=meta["stats_columns"],
            mean=np.asarray(meta["stats_mean"], dtype=np.float64),
            scale=np.asarray(meta["stats_scale"], dtype=np.float64),
            zero_variance=meta["stats_zero_variance"],
        )
        return cls(
            source_train=parts["train"],
            target_validation=parts["val"],
            target_test=parts["test"],
            shift_threshold=meta["shift_threshold"],
            standardization_stats=stats,
            warnings=meta["warnings"],
        )


def load_csv(
    path,
    has_header: bool = True,
    delimiter: str = ",",
    column_names: list[str] | None = None,
    missing_markers=MISSING_MARKERS,
    skip_rows: int = 0,
    spec: EncodingSpec | None = None,
) -> RawTable:
    """Parse a delimiter-separated file into a typed :class:`RawTable`.

    A column is numeric iff every non-missing entry parses as a real
    number. Fully empty lines are skipped; a row whose field count
    differs from the header raises :class:`RaggedRowError`. When ``spec``
    is given, rows with a missing value in any spec-referenced column are
    dropped and counted in ``dropped_rows``.
    """
    rows = []
    header = list(column_names) if column_names is not None else None
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        for lineno, fields in enumerate(reader, start=1):
            if lineno <= skip_rows:
                continue
            if not fields or (len(fields) == 1 and not fields[0].strip()):
                continue
            fields = [f.strip() for f in fields]
            if has_header and header is None and column_names is None:
                header = fields
                continue
            if header is not None and len(fields) != len(header):
                raise RaggedRowError(
                    f"{path}: row {lineno} has {len(fields)} fields, "
                    f"expected {len(header)}"
                )
            rows.append(fields)
    if header is None:
        if not rows:
            raise EmptyFileError(f"{path}: no data rows")
        header = [f"col_{j}" for j in range(len(rows[0]))]
        widths = {len(r) for r in rows}
        if len(widths) > 1:
            raise RaggedRowError(f"{path}: rows have differing field counts {widths}")
    if not rows:
        raise EmptyFileError(f"{path}: no data rows")
    if len(set(header)) != len(header):
        raise ValueError(f"{path}: duplicate column names in header")

    missing = set(missing_markers)
    columns = []
    for j in range(len(header)):
        columns.append([None if r[j] in missing else r[j] for r in rows])

    is_numeric = []
    for j, col in enumerate(columns):
        present = [v for v in col if v is not None]
        numeric = bool(present)
        for v in present:
            try:
                float(v)
            except ValueError:
                numeric = False
                break
        is_numeric.append(numeric)
        if numeric:
            columns[j] = [None if v is None else float(v) for v in col]

    table = RawTable(column_names=header, columns=columns, is_numeric=is_numeric)
    if spec is not None:
        table = drop_missing_rows(table, spec.referenced_columns())
    return table


def drop_missing_rows(table: RawTable, column_names: list[str]) -> RawTable:
    """Drop rows that have a missing value in any of the named columns."""
    for name in column_names:
        table.column(name)  # raises KeyError on absent columns
    idx = [table.column_names.index(name) for name in column_names]
    keep = [
        i
        for i in range(table.row_count)
        if all(table.columns[j][i] is not None for j in idx)
    ]
    dropped = table.row_count - len(keep)
    columns = [[col[i] for i in keep] for col in table.columns]
    return RawTable(
        column_names=list(table.column_names),
        columns=columns,
        is_numeric=list(table.is_numeric),
        dropped_rows=table.dropped_rows + dropped,
    )


def _apply_rule(rule: dict, values: list, numeric: bool, what: str) -> np.ndarray:
    """Map raw column values to {0,1} per a JSON rule document.

    Supported ops: ``in`` (membership in ``values``) and ``ge_median``
    (1 iff the value is at or above the column median).
    """
    if not isinstance(rule, dict) or "op" not in rule:
        raise ValueError(f"{what} rule must be a dict with an 'op' key: {rule!r}")
    op = rule["op"]
    if op == "in":
        wanted = rule.get("values")
        if not wanted:
            raise ValueError(f"{what} 'in' rule needs a nonempty 'values' list")
        if numeric:
            targets = {float(v) for v in wanted}
            out = [1 if v in targets else 0 for v in values]
        else:
            targets = {str(v).strip() for v in wanted}
            out = [1 if v in targets else 0 for v in values]
    elif op == "ge_median":
        if not numeric:
            raise ValueError(f"{what} 'ge_median' rule requires a numeric column")
        arr = np.asarray(values, dtype=np.float64)
        out = (arr >= np.median(arr)).astype(np.int64)
    else:
        raise ValueError(f"{what} rule has unknown op {op!r}")
    out = np.asarray(out, dtype=np.int64)
    if not np.isin(out, (0, 1)).all():
        raise ValueError(f"{what} rule produced values outside {{0, 1}}")
    return out


def encode(table: RawTable, spec: EncodingSpec) -> TabularDataset:
    """Build the dense feature matrix, labels, and protected vector.

    Numeric columns pass through as single feature columns; each
    categorical column expands to one indicator column per distinct value
    observed in the full table, in lexicographic value order. The label,
    protected, and shift columns contribute no feature columns (unless
    the shift column is itself listed as a feature).
    """
    for name in spec.referenced_columns():
        col = table.column(name)
        if any(v is None for v in col):
            raise ValueError(
                f"column {name!r} has missing values; drop them before encoding"
            )

    blocks: list[np.ndarray] = []
    feature_map: list[str] = []
    numeric_indices: list[int] = []
    column_origin: dict[str, list[int]] = {}

    for name in spec.numeric_columns:
        j = table.column_names.index(name)
        if not table.is_numeric[j]:
            raise ValueError(f"column {name!r} declared numeric but has text values")
        idx = len(feature_map)
        blocks.append(np.asarray(table.columns[j], dtype=np.float64)[:, None])
        feature_map.append(name)
        numeric_indices.append(idx)
        column_origin[name] = [idx]

    for name in spec.categorical_columns:
        col = [str(v) for v in table.column(name)]
        levels = sorted(set(col))
        start = len(feature_map)
        arr = np.zeros((len(col), len(levels)), dtype=np.float64)
        level_pos = {v: k for k, v in enumerate(levels)}
        for i, v in enumerate(col):
            arr[i, level_pos[v]] = 1.0
        blocks.append(arr)
        feature_map.extend(f"{name}={v}" for v in levels)
        column_origin[name] = list(range(start, start + len(levels)))

    features = (
        np.hstack(blocks) if blocks else np.zeros((table.row_count, 0), dtype=np.float64)
    )

    label_j = table.column_names.index(spec.label_column)
    labels = _apply_rule(
        spec.label_rule, table.columns[label_j], table.is_numeric[label_j], "label"
    )
    prot_j = table.column_names.index(spec.protected_column)
    protected = _apply_rule(
        spec.protected_rule, table.columns[prot_j], table.is_numeric[prot_j], "protected"
    )

    related_indices = [list(column_origin[name]) for name in spec.related_features]
    return TabularDataset(
        features=features,
        labels=labels,
        protected=protected,
        feature_map=feature_map,
        related_indices=related_indices,
        related_names=list(spec.related_features),
        numeric_indices=numeric_indices,
        row_ids=np.arange(table.row_count, dtype=np.int64),
    )


def shift_split(
    dataset: TabularDataset,
    shift_values: np.ndarray,
    target_split_seed: int,
) -> DomainSplit:
    """Partition rows by the shift rule and standardize on source stats.

    Rows with shift value strictly below the full-dataset median form the
    source; the rest are shuffled by ``target_split_seed`` and split into
    validation and test halves (sizes differ by at most one).
    """
    shift_values = np.asarray(shift_values, dtype=np.float64)
    if shift_values.ndim != 1 or len(shift_values) != dataset.n_rows:
        raise ValueError("shift values must be one per dataset row")
    threshold = float(np.median(shift_values))
    source_mask = shift_values < threshold
    n_source = int(source_mask.sum())
    if n_source == 0 or n_source == dataset.n_rows:
        raise DegenerateShiftError(
            "degenerate shift split: all rows fall on one side of the median"
        )

    source = dataset.take(np.flatnonzero(source_mask))
    target_idx = np.flatnonzero(~source_mask)
    rng = np.random.default_rng(target_split_seed)
    target_idx = target_idx[rng.permutation(len(target_idx))]
    n_val = len(target_idx) // 2
    validation = dataset.take(target_idx[:n_val])
    test = dataset.take(target_idx[n_val:])

    warnings: list[str] = []
    cols = list(dataset.numeric_indices)
    if cols:
        sub = source.features[:, cols]
        mean = sub.mean(axis=0)
        std = sub.std(axis=0)
        zero = [cols[k] for k in np.flatnonzero(std == 0.0)]
        for c in zero:
            warnings.append(
                f"numeric column {dataset.feature_map[c]!r} has zero variance in "
                "source train; centered only"
            )
        scale = np.where(std == 0.0, 1.0, std)
    else:
        mean = np.zeros(0)
        scale = np.ones(0)
        zero = []
    stats = StandardizationStats(columns=cols, mean=mean, scale=scale, zero_variance=zero)

    for part in (source, validation, test):
        part.features = stats.apply(part.features)

    return DomainSplit(
        source_train=source,
        target_validation=validation,
        target_test=test,
        shift_threshold=threshold,
        standardization_stats=stats,
        warnings=warnings,
    )


def drop_related(dataset: TabularDataset) -> TabularDataset:
    """Remove every related-feature column; reindex the rest consistently."""
    drop = set(dataset.related_columns_flat())
    if not drop:
        return dataset
    keep = [j for j in range(dataset.n_features) if j not in drop]
    old_to_new = {old: new for new, old in enumerate(keep)}
    return TabularDataset(
        features=dataset.features[:, keep],
        labels=dataset.labels,
        protected=dataset.protected,
        feature_map=[dataset.feature_map[j] for j in keep],
        related_indices=[],
        related_names=[],
        numeric_indices=[
            old_to_new[j] for j in dataset.numeric_indices if j in old_to_new
        ],
        row_ids=dataset.row_ids,
    )


def drop_related_split(split: DomainSplit) -> DomainSplit:
    """Apply :func:`drop_related` to all three partitions of a split."""
    return DomainSplit(
        source_train=drop_related(split.source_train),
        target_validation=drop_related(split.target_validation),
        target_test=drop_related(split.target_test),
        shift_threshold=split.shift_threshold,
        standardization_stats=split.standardization_stats,
        warnings=list(split.warnings),
    )
