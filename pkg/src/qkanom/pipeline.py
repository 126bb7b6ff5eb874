"""End-to-end experiment orchestration: select -> scale -> kernel -> fit -> score.

A run executes ``trials`` independent trials. Each trial reseeds the
train/test split from (base seed, trial index), reranks features on the
labeled rows outside that trial's test set, scales with training-set
statistics, builds the train and test Gram matrices (optionally cached on
disk), fits the one-class SVM on the baseline-only training kernel and
scores the mixed test set. Anomaly (stress) is the positive class for
precision/recall/F1.

The machine-readable report contains no timestamps, paths or worker counts,
so identical configurations produce byte-identical reports.
"""

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data_io import (
    AngleScaler,
    DatasetTable,
    Label,
    SplitSpec,
    generate_synthetic,
    parse_csv,
    split_indices,
)
from .feature_map import DenseAngleFeatureMap
from .feature_select import GiniFeatureSelector
from .kernel import (
    CacheFormatError,
    FidelityKernel,
    LinearKernel,
    Projection2D,
    RbfKernel,
    SampledFidelityKernel,
    gram_test,
    gram_train,
    kernel_pca_2d,
    load_kernel,
    psd_clip,
    save_kernel,
)
from .ocsvm import PrecomputedOneClassSVM

KERNEL_MODES = ("qexact", "qsampled", "linear", "rbf")
METRIC_NAMES = ("accuracy", "precision", "recall", "f1")
REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    """Everything one experiment needs; see the CLI for the flag mapping."""

    data: str
    label_column: str = "label"
    num_features: int = 8
    kernel: str = "qexact"
    shots: int = 1024
    gamma: float | None = None
    nu: float = 0.1
    trials: int = 10
    seed: int = 0
    n_train: int = 2000
    n_test: int = 1500
    workers: int = 1
    cache_dir: str | None = None
    out_dir: str = "out"

    def __post_init__(self):
        if self.kernel not in KERNEL_MODES:
            raise ValueError(f"kernel must be one of {KERNEL_MODES}, got {self.kernel!r}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.num_features < 1:
            raise ValueError(f"num_features must be >= 1, got {self.num_features}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")
        if not 0.0 < self.nu <= 1.0:
            raise ValueError(f"nu must be in (0, 1], got {self.nu}")
        if self.kernel == "qsampled" and self.shots < 1:
            raise ValueError(f"shots must be >= 1, got {self.shots}")

    def resolved_gamma(self) -> float:
        return self.gamma if self.gamma is not None else 1.0 / self.num_features


def parse_data_spec(spec: str):
    """Split a --data value into ("csv", path) or ("synthetic", kind, params)."""
    if not spec.startswith("synthetic:"):
        return ("csv", spec)
    body = spec[len("synthetic:"):]
    parts = body.split(",")
    kind = parts[0]
    params = {}
    for item in parts[1:]:
        if not item:
            continue
        if "=" not in item:
            raise ValueError(f"bad synthetic parameter {item!r}, expected key=value")
        key, value = item.split("=", 1)
        params[key.strip()] = float(value) if "." in value else int(value)
    return ("synthetic", kind, params)


class DataSource:
    """Loaded dataset able to materialize leakage-free per-trial splits."""

    def __init__(self, config: RunConfig):
        parsed_spec = parse_data_spec(config.data)
        self._table = None
        self._parsed = None
        if parsed_spec[0] == "csv":
            self._parsed = parse_csv(parsed_spec[1], config.label_column)
            self._labels = self._parsed.labels
        else:
            _, kind, params = parsed_spec
            self._table = generate_synthetic(kind, params, seed=config.seed)
            self._labels = self._table.labels

    @property
    def labels(self) -> np.ndarray:
        return self._labels

    def trial_tables(self, spec: SplitSpec):
        """(train, test, selection_pool) tables for one trial.

        The selection pool is every row outside the test set, keeping the
        tree's labeled fit disjoint from evaluation data. For CSV sources
        the categorical frequency encoding is fitted on the training rows
        only.
        """
        train_idx, test_idx = split_indices(self._labels, spec)
        pool_idx = np.setdiff1d(np.arange(len(self._labels)), test_idx)
        if self._table is not None:
            table = self._table
        else:
            table = DatasetTable(
                feature_names=self._parsed.feature_names,
                rows=self._parsed.encode_rows(train_idx),
                labels=self._parsed.labels,
                source=self._parsed.source,
            )
        return table.subset(train_idx), table.subset(test_idx), table.subset(pool_idx)


def trial_seed(base_seed: int, trial: int) -> int:
    """Stable derived seed for trial t of a run."""
    seq = np.random.SeedSequence([int(base_seed), int(trial)])
    return int(seq.generate_state(1, np.uint64)[0])


def make_kernel_function(config: RunConfig, seed: int):
    if config.kernel in ("qexact", "qsampled"):
        feature_map = DenseAngleFeatureMap(num_features=config.num_features)
        if config.kernel == "qexact":
            return FidelityKernel(feature_map)
        return SampledFidelityKernel(feature_map, shots=config.shots, seed=seed)
    if config.kernel == "linear":
        return LinearKernel()
    return RbfKernel(gamma=config.resolved_gamma())


def kernel_config_key(config: RunConfig, seed: int) -> str:
    """Hash of every field that influences the Gram matrices."""
    payload = {
        "data": config.data,
        "label_column": config.label_column,
        "num_features": config.num_features,
        "kernel": config.kernel,
        "n_train": config.n_train,
        "n_test": config.n_test,
        "trial_seed": seed,
    }
    if config.kernel == "qsampled":
        payload["shots"] = config.shots
    if config.kernel == "rbf":
        payload["gamma"] = config.resolved_gamma()
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def cache_paths(cache_dir, key: str):
    cache_dir = Path(cache_dir)
    return cache_dir / f"{key}_train.qkrn", cache_dir / f"{key}_test.qkrn"


def compute_gram_pair(config: RunConfig, seed: int, X_train, X_test, notices=None):
    """Train and test Gram matrices, reusing the on-disk cache when valid."""
    notices = notices if notices is not None else []
    paths = None
    if config.cache_dir is not None:
        paths = cache_paths(config.cache_dir, kernel_config_key(config, seed))
        if paths[0].exists() and paths[1].exists():
            try:
                K_train, K_test = load_kernel(paths[0]), load_kernel(paths[1])
                if K_train.rows == len(X_train) and K_test.rows == len(X_test):
                    return K_train, K_test, True
                notices.append(f"cache shape mismatch at {paths[0]}, recomputing")
            except CacheFormatError as exc:
                notices.append(f"invalid cache at {paths[0]}: {exc}; recomputing")
    kernel_fn = make_kernel_function(config, seed)
    K_train = gram_train(kernel_fn, X_train, workers=config.workers)
    K_test = gram_test(kernel_fn, X_test, X_train, workers=config.workers)
    if paths is not None:
        Path(config.cache_dir).mkdir(parents=True, exist_ok=True)
        save_kernel(K_train, paths[0])
        save_kernel(K_test, paths[1])
    return K_train, K_test, False


def confusion_counts(y_true, predictions) -> dict:
    """Confusion counts with anomaly (stress) as the positive class.

    ``predictions`` follow the estimator convention: +1 normal, -1 anomaly.
    """
    y_true = np.asarray(y_true)
    predicted_anomaly = np.asarray(predictions) < 0
    actual_anomaly = y_true == Label.STRESS
    return {
        "tp": int(np.sum(predicted_anomaly & actual_anomaly)),
        "fp": int(np.sum(predicted_anomaly & ~actual_anomaly)),
        "tn": int(np.sum(~predicted_anomaly & ~actual_anomaly)),
        "fn": int(np.sum(~predicted_anomaly & actual_anomaly)),
    }


def binary_metrics(confusion: dict) -> dict:
    """accuracy/precision/recall/f1; zero-denominator cases come back None."""
    tp, fp, tn, fn = (confusion[k] for k in ("tp", "fp", "tn", "fn"))
    total = tp + fp + tn + fn
    accuracy = (tp + tn) / total if total else None
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn) if tp + fn else None
    f1 = None
    if precision is not None and recall is not None and precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    return {"accuracy": accuracy, "precision": precision, "recall": recall, "f1": f1}


def aggregate_metrics(per_trial: list[dict]) -> dict:
    """Max and average per metric over trials where the metric is defined."""
    aggregate = {}
    for name in METRIC_NAMES:
        values = [m[name] for m in per_trial if m[name] is not None]
        aggregate[name] = {
            "max": max(values) if values else None,
            "avg": sum(values) / len(values) if values else None,
            "undefined_trials": len(per_trial) - len(values),
        }
    return aggregate


@dataclass
class TrialOutcome:
    trial: int
    seed: int
    selected_features: list[int] | None = None
    confusion: dict | None = None
    metrics: dict | None = None
    projection: Projection2D | None = None
    cache_hit: bool = False
    error: str | None = None


def run_trial(source: DataSource, config: RunConfig, trial: int,
              notices=None) -> TrialOutcome:
    seed = trial_seed(config.seed, trial)
    outcome = TrialOutcome(trial=trial, seed=seed)
    try:
        spec = SplitSpec(n_train=config.n_train, n_test=config.n_test, seed=seed)
        train, test, pool = source.trial_tables(spec)

        selector = GiniFeatureSelector(k=config.num_features)
        selector.fit(pool.rows, pool.labels)
        outcome.selected_features = [int(i) for i in selector.get_support(indices=True)]

        scaler = AngleScaler().fit(selector.transform(train.rows))
        X_train = scaler.transform(selector.transform(train.rows))
        X_test = scaler.transform(selector.transform(test.rows))

        K_train, K_test, outcome.cache_hit = compute_gram_pair(
            config, seed, X_train, X_test, notices
        )

        K_fit = psd_clip(K_train) if config.kernel == "qsampled" else K_train
        model = PrecomputedOneClassSVM(nu=config.nu).fit(K_fit)
        predictions = model.predict(K_test)
        outcome.confusion = confusion_counts(test.labels, predictions)
        outcome.metrics = binary_metrics(outcome.confusion)

        tags = np.where(test.labels == Label.STRESS, "anomaly", "baseline")
        outcome.projection = kernel_pca_2d(K_test, K_train, tags)
    except Exception as exc:  # recorded per trial; the run continues
        outcome.error = f"{type(exc).__name__}: {exc}"
    return outcome


@dataclass
class RunResult:
    config: RunConfig
    outcomes: list[TrialOutcome]
    notices: list[str]

    @property
    def succeeded(self) -> list[TrialOutcome]:
        return [o for o in self.outcomes if o.error is None]

    def aggregate(self) -> dict:
        return aggregate_metrics([o.metrics for o in self.succeeded])

    def report(self) -> dict:
        """The machine-readable report; deterministic for a given config."""
        trials = []
        for o in self.outcomes:
            trials.append({
                "trial": o.trial,
                "seed": o.seed,
                "selected_features": o.selected_features,
                "confusion": o.confusion,
                "metrics": o.metrics,
                "error": o.error,
            })
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "config": {
                "data": self.config.data,
                "label_column": self.config.label_column,
                "num_features": self.config.num_features,
                "kernel": self.config.kernel,
                "shots": self.config.shots if self.config.kernel == "qsampled" else None,
                "gamma": (self.config.resolved_gamma()
                          if self.config.kernel == "rbf" else None),
                "nu": self.config.nu,
                "trials": self.config.trials,
                "seed": self.config.seed,
                "n_train": self.config.n_train,
                "n_test": self.config.n_test,
            },
            "trials": trials,
            "aggregate": self.aggregate(),
            "failed_trials": sum(1 for o in self.outcomes if o.error is not None),
        }

    def report_text(self) -> str:
        return json.dumps(self.report(), indent=2, sort_keys=True) + "\n"


def run_experiment(config: RunConfig) -> RunResult:
    """Run every trial; raises DataError only if the dataset cannot load."""
    source = DataSource(config)
    notices: list[str] = []
    outcomes = [
        run_trial(source, config, t, notices) for t in range(1, config.trials + 1)
    ]
    return RunResult(config=config, outcomes=outcomes, notices=notices)


def write_projection_csv(projection: Projection2D, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("u,v,label\n")
        for (u, v), tag in zip(projection.points, projection.labels):
            fh.write(f"{float(u)!r},{float(v)!r},{tag}\n")
