"""Command-line interface.

Commands: ``select`` (rank features), ``kernel`` (compute and cache Gram
matrices), ``run`` (full pipeline with multi-trial max/avg metrics and 2D
projection export), ``synth`` (write a synthetic CSV).

Exit codes: 0 success, 1 runtime failure, 2 data error, 64 usage error.
A ``--config`` file holds ``key=value`` lines (``#`` comments allowed) whose
entries override the corresponding flags. The ``QKANOM_WORKERS`` environment
variable supplies the worker count when ``--workers`` is absent.
"""

import argparse
import json
import os
import sys
import time
from pathlib import Path

from .data_io import AngleScaler, DataError, generate_synthetic, load_csv, write_csv
from .feature_select import GiniFeatureSelector
from .pipeline import (
    DataSource,
    METRIC_NAMES,
    RunConfig,
    SplitSpec,
    compute_gram_pair,
    parse_data_spec,
    run_experiment,
    trial_seed,
    write_projection_csv,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_DATA = 2
EXIT_USAGE = 64

WORKERS_ENV_VAR = "QKANOM_WORKERS"


class UsageError(Exception):
    """Bad flag combination or out-of-range request (exit code 64)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add_common_flags(sub):
    sub.add_argument("--data", required=True,
                     help="CSV path or synthetic:<kind>,key=value,...")
    sub.add_argument("--label-col", default="label", dest="label_col")
    sub.add_argument("--features", type=int, default=8, metavar="K")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out-dir", default="out", dest="out_dir")
    sub.add_argument("--config", default=None,
                     help="key=value file; entries override flags")


def _add_kernel_flags(sub):
    sub.add_argument("--kernel", choices=("qexact", "qsampled", "linear", "rbf"),
                     default="qexact")
    sub.add_argument("--shots", type=int, default=1024)
    sub.add_argument("--gamma", type=float, default=None)
    sub.add_argument("--nu", type=float, default=0.1)
    sub.add_argument("--trials", type=int, default=10)
    sub.add_argument("--workers", type=int, default=None)
    sub.add_argument("--cache-dir", default=None, dest="cache_dir")
    sub.add_argument("--n-train", type=int, default=2000, dest="n_train")
    sub.add_argument("--n-test", type=int, default=1500, dest="n_test")


def build_parser() -> _Parser:
    parser = _Parser(prog="qkanom",
                     description="Quantum-fidelity-kernel one-class SVM pipeline")
    commands = parser.add_subparsers(dest="command", required=True)

    select = commands.add_parser("select", help="rank features by impurity decrease")
    _add_common_flags(select)

    kernel = commands.add_parser("kernel", help="compute and cache Gram matrices")
    _add_common_flags(kernel)
    _add_kernel_flags(kernel)
    kernel.add_argument("--trial", type=int, default=1,
                        help="trial index whose split to compute (default 1)")

    run = commands.add_parser("run", help="full pipeline with metrics report")
    _add_common_flags(run)
    _add_kernel_flags(run)

    synth = commands.add_parser("synth", help="write a synthetic CSV dataset")
    synth.add_argument("--kind", default="two-gaussians",
                       choices=("two-gaussians", "planted-features"))
    synth.add_argument("--dims", type=int, default=None)
    synth.add_argument("--n-per-class", type=int, default=1000, dest="n_per_class")
    synth.add_argument("--separation", type=float, default=None)
    synth.add_argument("--sigma", type=float, default=None)
    synth.add_argument("--planted-k", type=int, default=None, dest="planted_k")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True, help="output CSV path")
    return parser


_CONFIG_TYPES = {
    "features": int, "seed": int, "shots": int, "trials": int, "workers": int,
    "n_train": int, "n_test": int, "trial": int,
    "gamma": float, "nu": float,
}


def apply_config_file(args: argparse.Namespace) -> argparse.Namespace:
    """Apply key=value overrides from --config; config entries win over flags."""
    if getattr(args, "config", None) is None:
        return args
    path = Path(args.config)
    if not path.exists():
        raise DataError(f"config file not found: {path}")
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if not hasattr(args, key):
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        caster = _CONFIG_TYPES.get(key, str)
        try:
            setattr(args, key, caster(value))
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}")
    return args


def resolve_workers(args: argparse.Namespace) -> int:
    workers = getattr(args, "workers", None)
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV_VAR, "1"))
    if workers < 1:
        raise UsageError(f"workers must be >= 1, got {workers}")
    return workers


def make_run_config(args: argparse.Namespace) -> RunConfig:
    try:
        return RunConfig(
            data=args.data,
            label_column=args.label_col,
            num_features=args.features,
            kernel=args.kernel,
            shots=args.shots,
            gamma=args.gamma,
            nu=args.nu,
            trials=args.trials,
            seed=args.seed,
            n_train=args.n_train,
            n_test=args.n_test,
            workers=resolve_workers(args),
            cache_dir=args.cache_dir,
            out_dir=args.out_dir,
        )
    except ValueError as exc:
        raise UsageError(str(exc))


def _load_labeled_table(args):
    kind = parse_data_spec(args.data)
    if kind[0] == "synthetic":
        return generate_synthetic(kind[1], kind[2], seed=args.seed)
    return load_csv(args.data, args.label_col)


def cmd_select(args) -> int:
    table = _load_labeled_table(args)
    if not 1 <= args.features <= table.num_features:
        raise UsageError(
            f"--features must be in [1, {table.num_features}] "
            f"for this dataset, got {args.features}"
        )
    selector = GiniFeatureSelector(k=args.features)
    selector.fit(table.rows, table.labels)
    ranking = selector.ranking_

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifact = {
        "feature_names": table.feature_names,
        "scores": [float(s) for s in ranking.scores],
        "order": [int(i) for i in ranking.order],
        "selected": [int(i) for i in ranking.selected],
        "k": args.features,
    }
    (out_dir / "ranking.json").write_text(
        json.dumps(artifact, indent=2, sort_keys=True) + "\n"
    )
    lines = [f"{'rank':>4}  {'index':>5}  {'score':>10}  name"]
    for rank, idx in enumerate(ranking.order, start=1):
        lines.append(
            f"{rank:>4}  {idx:>5}  {ranking.scores[idx]:>10.6f}  "
            f"{table.feature_names[idx]}"
        )
    (out_dir / "ranking.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines[: args.features + 1]))
    print(f"wrote {out_dir / 'ranking.json'} and {out_dir / 'ranking.txt'}")
    return EXIT_OK


def cmd_kernel(args) -> int:
    config = make_run_config(args)
    if config.cache_dir is None:
        raise UsageError("kernel command requires --cache-dir")
    source = DataSource(config)
    seed = trial_seed(config.seed, args.trial)
    spec = SplitSpec(n_train=config.n_train, n_test=config.n_test, seed=seed)
    train, test, pool = source.trial_tables(spec)

    selector = GiniFeatureSelector(k=config.num_features).fit(pool.rows, pool.labels)
    scaler = AngleScaler().fit(selector.transform(train.rows))
    X_train = scaler.transform(selector.transform(train.rows))
    X_test = scaler.transform(selector.transform(test.rows))

    notices: list[str] = []
    started = time.perf_counter()
    K_train, K_test, cache_hit = compute_gram_pair(config, seed, X_train, X_test, notices)
    elapsed = time.perf_counter() - started
    for notice in notices:
        print(notice)
    status = "loaded from cache" if cache_hit else "computed"
    print(
        f"train kernel {K_train.rows}x{K_train.cols}, "
        f"test kernel {K_test.rows}x{K_test.cols}: {status} "
        f"in {elapsed:.2f}s with {config.workers} worker(s)"
    )
    return EXIT_OK


def _format_metric(value) -> str:
    return "   n/a" if value is None else f"{value:.4f}"


def cmd_run(args) -> int:
    config = make_run_config(args)
    result = run_experiment(config)

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(result.report_text())
    for outcome in result.outcomes:
        if outcome.projection is not None:
            write_projection_csv(
                outcome.projection, out_dir / f"projection_trial_{outcome.trial:03d}.csv"
            )

    for notice in result.notices:
        print(notice)
    header = f"{'trial':>5}  " + "  ".join(f"{n:>9}" for n in METRIC_NAMES)
    print(header)
    for outcome in result.outcomes:
        if outcome.error is not None:
            print(f"{outcome.trial:>5}  failed: {outcome.error}")
            continue
        cells = "  ".join(f"{_format_metric(outcome.metrics[n]):>9}" for n in METRIC_NAMES)
        print(f"{outcome.trial:>5}  {cells}")
    aggregate = result.aggregate()
    for row in ("max", "avg"):
        cells = "  ".join(
            f"{_format_metric(aggregate[n][row]):>9}" for n in METRIC_NAMES
        )
        print(f"{row:>5}  {cells}")
    print(f"wrote {out_dir / 'report.json'}")
    if not result.succeeded:
        print("all trials failed", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_synth(args) -> int:
    params = {}
    if args.dims is not None:
        params["dims"] = args.dims
    if args.separation is not None:
        params["separation"] = args.separation
    if args.sigma is not None:
        params["sigma"] = args.sigma
    if args.planted_k is not None:
        params["planted_k"] = args.planted_k
    params["n_per_class"] = args.n_per_class
    try:
        table = generate_synthetic(args.kind, params, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc))
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(table, out)
    print(f"wrote {table.num_rows} rows x {table.num_features} features to {out}")
    if table.meta:
        print(f"meta: {table.meta}")
    return EXIT_OK


_COMMANDS = {"select": cmd_select, "kernel": cmd_kernel, "run": cmd_run,
             "synth": cmd_synth}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args = apply_config_file(args)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
