"""Dataset ingestion, preprocessing, sampling, and synthetic generators.

CSV files are comma-separated UTF-8 with a header row; one column carries
the class label (baseline vs stress), every other column is a feature.
Columns containing any non-numeric cell are treated as categorical and
replaced by the relative frequency of each category among the rows the
encoding was fitted on; unseen categories encode to 0. Rows with empty
cells, unmappable labels or non-finite numeric values are rejected with
row-numbered diagnostics.

Feature scaling maps each feature's training range onto [0, pi], the span
one Rx rotation sweeps injectively in probability; out-of-range test values
clamp, constant features map to pi/2.
"""

import csv
from collections import Counter
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError


class DataError(ValueError):
    """Dataset content is unusable (maps to CLI exit code 2)."""


class DataFormatError(DataError):
    """Dataset structure is wrong: missing header, label column, etc."""


class Label(IntEnum):
    BASELINE = 0
    STRESS = 1


DEFAULT_LABEL_MAP = {
    "baseline": Label.BASELINE,
    "normal": Label.BASELINE,
    "0": Label.BASELINE,
    "stress": Label.STRESS,
    "anomaly": Label.STRESS,
    "1": Label.STRESS,
}


@dataclass
class DatasetTable:
    """A fully numeric dataset: rows, per-row labels, column names."""

    feature_names: list[str]
    rows: np.ndarray
    labels: np.ndarray
    source: str
    diagnostics: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.rows.ndim != 2 or self.rows.shape[1] != len(self.feature_names):
            raise ValueError(
                f"rows shape {self.rows.shape} does not match "
                f"{len(self.feature_names)} feature name(s)"
            )
        if len(self.rows) != len(self.labels):
            raise ValueError("rows and labels lengths differ")

    @property
    def num_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def num_features(self) -> int:
        return self.rows.shape[1]

    def subset(self, indices) -> "DatasetTable":
        indices = np.asarray(indices)
        return DatasetTable(
            feature_names=self.feature_names,
            rows=self.rows[indices],
            labels=self.labels[indices],
            source=self.source,
            meta=self.meta,
        )


def _normalize_label_map(label_map) -> dict:
    mapping = {}
    for key, value in (label_map or DEFAULT_LABEL_MAP).items():
        if isinstance(value, str):
            value = Label[value.upper()]
        mapping[key.strip().lower()] = Label(value)
    return mapping


@dataclass
class ParsedDataset:
    """CSV contents after row rejection, before categorical encoding.

    ``numeric`` holds parsed floats (NaN in categorical columns);
    ``categorical_columns`` maps column index to that column's raw values.
    Keeping the raw values lets callers fit the frequency encoding on any
    subset of rows (e.g. the training rows only).
    """

    feature_names: list[str]
    numeric: np.ndarray
    categorical_columns: dict[int, list[str]]
    labels: np.ndarray
    diagnostics: list[str]
    source: str

    @property
    def num_rows(self) -> int:
        return len(self.labels)

    def encode_rows(self, fit_indices=None) -> np.ndarray:
        """Materialize the numeric matrix, fitting category frequencies on
        ``fit_indices`` (default: every row)."""
        out = self.numeric.copy()
        if fit_indices is None:
            fit_indices = np.arange(self.num_rows)
        fit_indices = np.asarray(fit_indices)
        for col, values in self.categorical_columns.items():
            freq = Counter(values[i] for i in fit_indices)
            n_fit = len(fit_indices)
            out[:, col] = [freq.get(v, 0) / n_fit for v in values]
        return out

    def to_table(self, fit_indices=None) -> DatasetTable:
        return DatasetTable(
            feature_names=self.feature_names,
            rows=self.encode_rows(fit_indices),
            labels=self.labels,
            source=self.source,
            diagnostics=self.diagnostics,
        )


def parse_csv(path, label_column: str, label_map=None) -> ParsedDataset:
    """Read and validate a CSV file; see the module docstring for the rules."""
    mapping = _normalize_label_map(label_map)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file, header row required")
        raw_rows = list(reader)

    header = [name.strip() for name in header]
    if label_column not in header:
        raise DataFormatError(
            f"{path}: label column {label_column!r} not in header {header}"
        )
    label_idx = header.index(label_column)
    feature_names = [name for k, name in enumerate(header) if k != label_idx]
    n_features = len(feature_names)
    if n_features == 0:
        raise DataFormatError(f"{path}: no feature columns besides the label")

    diagnostics: list[str] = []
    kept_cells: list[list[str]] = []
    kept_labels: list[int] = []
    kept_lineno: list[int] = []
    for lineno, row in enumerate(raw_rows, start=2):
        if len(row) != len(header):
            diagnostics.append(
                f"row {lineno}: expected {len(header)} fields, got {len(row)}"
            )
            continue
        stripped = [c.strip() for c in row]
        if "" in stripped:
            col = header[stripped.index("")]
            diagnostics.append(f"row {lineno}, column {col!r}: empty cell")
            continue
        label_raw = stripped[label_idx]
        cells = [c for k, c in enumerate(stripped) if k != label_idx]
        label = mapping.get(label_raw.lower())
        if label is None:
            diagnostics.append(
                f"row {lineno}, column {label_column!r}: "
                f"unmappable label {label_raw!r}"
            )
            continue
        kept_cells.append(cells)
        kept_labels.append(int(label))
        kept_lineno.append(lineno)

    # Column typing: categorical iff any surviving cell fails float parsing.
    categorical = [False] * n_features
    for col in range(n_features):
        for cells in kept_cells:
            try:
                float(cells[col])
            except ValueError:
                categorical[col] = True
                break

    numeric_rows: list[list[float]] = []
    final_cells: list[list[str]] = []
    final_labels: list[int] = []
    for cells, label, lineno in zip(kept_cells, kept_labels, kept_lineno):
        parsed = [np.nan] * n_features
        bad = None
        for col in range(n_features):
            if categorical[col]:
                continue
            value = float(cells[col])
            if not np.isfinite(value):
                bad = (col, cells[col])
                break
            parsed[col] = value
        if bad is not None:
            diagnostics.append(
                f"row {lineno}, column {feature_names[bad[0]]!r}: "
                f"non-finite value {bad[1]!r}"
            )
            continue
        numeric_rows.append(parsed)
        final_cells.append(cells)
        final_labels.append(label)

    if not final_labels:
        raise DataError(
            f"{path}: all {len(raw_rows)} row(s) rejected; "
            f"first diagnostics: {diagnostics[:3]}"
        )
    categorical_columns = {
        col: [cells[col] for cells in final_cells]
        for col in range(n_features)
        if categorical[col]
    }
    return ParsedDataset(
        feature_names=feature_names,
        numeric=np.asarray(numeric_rows, dtype=np.float64).reshape(
            len(final_labels), n_features
        ),
        categorical_columns=categorical_columns,
        labels=np.asarray(final_labels, dtype=np.int64),
        diagnostics=diagnostics,
        source=str(path),
    )


def load_csv(path, label_column: str, label_map=None) -> DatasetTable:
    """Parse a CSV into a numeric table.

    Categorical frequencies are computed over all surviving rows of this
    file; for leakage-free pipelines parse first and encode with explicit
    fit indices (see ParsedDataset.encode_rows).
    """
    return parse_csv(path, label_column, label_map).to_table()


class AngleScaler(BaseEstimator):
    """Min-max scaler onto the encoding angle range [0, pi].

    Per-feature min and max come from the fit data only; transform clamps
    out-of-range values, and constant features map to pi/2.
    """

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError(f"fit requires a nonempty 2-D matrix, got {X.shape}")
        self.data_min_ = X.min(axis=0)
        self.data_max_ = X.max(axis=0)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "data_min_"):
            raise NotFittedError("AngleScaler is not fitted")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"expected {self.n_features_in_} feature(s), got shape {X.shape}"
            )
        span = self.data_max_ - self.data_min_
        out = np.full_like(X, np.pi / 2.0)
        ok = span > 0
        out[:, ok] = np.clip(
            np.pi * (X[:, ok] - self.data_min_[ok]) / span[ok], 0.0, np.pi
        )
        return out

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)


@dataclass(frozen=True)
class SplitSpec:
    """Sampling protocol: baseline-only training rows, balanced mixed test."""

    n_train: int = 2000
    n_test: int = 1500
    test_balance: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("n_train and n_test must be >= 1")
        if not 0.0 <= self.test_balance <= 1.0:
            raise ValueError(f"test_balance must be in [0, 1], got {self.test_balance}")
        exact = self.n_test * self.test_balance
        if abs(exact - round(exact)) > 1e-9:
            raise ValueError(
                f"n_test * test_balance = {exact} is not an integer; "
                f"the requested balance is unsatisfiable"
            )

    @property
    def n_test_baseline(self) -> int:
        return round(self.n_test * self.test_balance)

    @property
    def n_test_stress(self) -> int:
        return self.n_test - self.n_test_baseline


def split_indices(labels, spec: SplitSpec):
    """Seeded sampling without replacement; returns (train_idx, test_idx).

    Training indices are all baseline and disjoint from the test baseline
    indices; the test block is shuffled.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(spec.seed)
    base_pool = np.flatnonzero(labels == Label.BASELINE)
    stress_pool = np.flatnonzero(labels == Label.STRESS)
    need_base = spec.n_train + spec.n_test_baseline
    if len(base_pool) < need_base:
        raise DataError(
            f"need {need_base} baseline rows "
            f"({spec.n_train} train + {spec.n_test_baseline} test), "
            f"only {len(base_pool)} available"
        )
    if len(stress_pool) < spec.n_test_stress:
        raise DataError(
            f"need {spec.n_test_stress} stress rows for the test set, "
            f"only {len(stress_pool)} available"
        )
    base_perm = rng.permutation(base_pool)
    train_idx = np.sort(base_perm[:spec.n_train])
    test_base = base_perm[spec.n_train:need_base]
    test_stress = rng.permutation(stress_pool)[:spec.n_test_stress]
    test_idx = rng.permutation(np.concatenate([test_base, test_stress]))
    return train_idx, test_idx


def split(table: DatasetTable, spec: SplitSpec):
    """(train, test) tables per the sampling protocol; train is baseline-only."""
    train_idx, test_idx = split_indices(table.labels, spec)
    return table.subset(train_idx), table.subset(test_idx)


def _two_gaussians(dims, n_per_class, separation, sigma, rng) -> tuple:
    offset = separation * sigma / np.sqrt(dims)
    baseline = rng.normal(0.0, sigma, size=(n_per_class, dims))
    stress = rng.normal(offset, sigma, size=(n_per_class, dims))
    return baseline, stress, {}


def _planted_features(dims, n_per_class, separation, planted_k, rng) -> tuple:
    planted = np.sort(rng.choice(dims, size=planted_k, replace=False))
    baseline = rng.normal(0.0, 1.0, size=(n_per_class, dims))
    stress = rng.normal(0.0, 1.0, size=(n_per_class, dims))
    stress[:, planted] += separation
    return baseline, stress, {"planted_indices": [int(i) for i in planted]}


SYNTHETIC_KINDS = ("two-gaussians", "planted-features")


def generate_synthetic(kind: str, params: dict | None = None, *, seed: int) -> DatasetTable:
    """Seeded synthetic dataset.

    two-gaussians: baseline ~ N(0, sigma^2 I), stress shifted by
    ``separation * sigma`` in Euclidean norm. Keys: dims, n_per_class,
    separation, sigma.

    planted-features: ``planted_k`` randomly chosen features shift by
    ``separation`` under stress, the rest are i.i.d. noise; the planted
    indices land in the table's ``meta``. Keys: dims, n_per_class,
    separation, planted_k.
    """
    canonical = kind.strip().lower().replace("_", "-").replace(" ", "-")
    if canonical == "twogaussians":
        canonical = "two-gaussians"
    if canonical == "plantedfeatures":
        canonical = "planted-features"
    if canonical not in SYNTHETIC_KINDS:
        raise ValueError(f"unknown synthetic kind {kind!r}; choose from {SYNTHETIC_KINDS}")
    params = dict(params or {})
    dims = int(params.pop("dims", 8 if canonical == "two-gaussians" else 60))
    n_per_class = int(params.pop("n_per_class", 1000))
    separation = float(params.pop("separation", 6.0 if canonical == "two-gaussians" else 2.0))
    if dims < 1 or n_per_class < 1:
        raise ValueError("dims and n_per_class must be >= 1")
    if separation < 0:
        raise ValueError(f"separation must be >= 0, got {separation}")
    rng = np.random.default_rng(seed)
    if canonical == "two-gaussians":
        sigma = float(params.pop("sigma", 1.0))
        if sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {sigma}")
        baseline, stress, meta = _two_gaussians(dims, n_per_class, separation, sigma, rng)
    else:
        planted_k = int(params.pop("planted_k", 8))
        if not 1 <= planted_k <= dims:
            raise ValueError(f"planted_k must be in [1, {dims}], got {planted_k}")
        baseline, stress, meta = _planted_features(
            dims, n_per_class, separation, planted_k, rng
        )
    if params:
        raise ValueError(f"unknown synthetic parameter(s): {sorted(params)}")
    rows = np.vstack([baseline, stress])
    labels = np.concatenate(
        [np.full(n_per_class, Label.BASELINE), np.full(n_per_class, Label.STRESS)]
    ).astype(np.int64)
    return DatasetTable(
        feature_names=[f"f{i}" for i in range(dims)],
        rows=rows,
        labels=labels,
        source=f"synthetic:{canonical}",
        meta=meta,
    )


def write_csv(table: DatasetTable, path, label_column: str = "label") -> None:
    """Write a table as CSV with labels rendered baseline/stress."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(table.feature_names + [label_column])
        for row, label in zip(table.rows, table.labels):
            writer.writerow(
                [repr(float(v)) for v in row] + [Label(label).name.lower()]
            )
