"""Command line entry point."""

from __future__ import annotations

import argparse
import logging
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Any

from itergraph import __version__
from itergraph.benchmarks import bench_scaling, fit_slopes, write_csv
from itergraph.config import ALIASES, decode_value, load_run_config
from itergraph.constants import VARIANTS
from itergraph.errors import ConfigError, DatasetError, ItergraphError
from itergraph.gradcheck import assert_passed, run_gradcheck
from itergraph.graph import perturb_edges, write_bipartite_edge_list, write_edge_list
from itergraph.loaders import load_citation, load_named, load_tabular
from itergraph.metrics import MetricsRecord, SeedRun, write_records
from itergraph.prerun import get_data_dir, get_output_dir
from itergraph.trainer import (
    HyperParams,
    evaluate,
    fit,
    fixed_iteration_accuracies,
    iteration_accuracies,
    prepare_forward,
)

if TYPE_CHECKING:  # pragma: no cover
    from collections.abc import Sequence

    from itergraph.config import RunConfig
    from itergraph.gradcheck import CheckResult
    from itergraph.loaders import GraphDataset

_logger = logging.getLogger(__name__)

HYPER_FLAGS = (
    "t_max",
    "lambda_",
    "eta",
    "alpha",
    "beta",
    "gamma",
    "eps",
    "m",
    "delta",
    "k",
    "s",
    "epochs",
    "patience",
    "lr",
)


def initialize_logger(level: int = 0) -> None:
    """Set up the package logging level based on the verbosity number."""
    verbosity_map = {
        -2: logging.CRITICAL,
        -1: logging.ERROR,
        0: logging.WARNING,
        1: logging.INFO,
        2: logging.DEBUG,
    }
    # Unknown logging level is treated as DEBUG
    logging_level = verbosity_map.get(level, logging.DEBUG)
    package_logger = logging.getLogger("itergraph")
    if not package_logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        package_logger.addHandler(handler)
    package_logger.setLevel(logging_level)
    _logger.debug("Logging initialized to level %s", logging_level)


@dataclass
class SeedJob:
    """One unit of work handed to a worker process."""

    config: RunConfig
    seed: int
    hyperparams: HyperParams
    attack_prob: float | None = None
    trace: bool = False


@dataclass
class SeedOutcome:
    """What a worker sends back to the collector."""

    run: SeedRun
    epochs: list[dict[str, Any]] = field(default_factory=list)
    trace: dict[str, Any] | None = None


def load_dataset_for(config: RunConfig, seed: int) -> GraphDataset:
    """Load the dataset a configuration points at."""
    if config.features is not None and config.labels is not None:
        if config.edges is not None:
            return load_citation(config.edges, config.features, config.labels, config.split, name=config.dataset, seed=seed)
        return load_tabular(config.features, config.labels, config.split, name=config.dataset, seed=seed)
    return load_named(config.dataset, get_data_dir(config.data_dir), config.split, seed=seed)


def run_seed(job: SeedJob) -> SeedOutcome:
    """Train, test and optionally trace one seed."""
    config = job.config
    dataset = load_dataset_for(config, job.seed)
    if job.attack_prob is not None:
        if dataset.a0 is None:
            msg = f"dataset {dataset.name} has no input graph to perturb"
            raise ConfigError(msg)
        dataset = dataset.with_adjacency(perturb_edges(dataset.a0, job.attack_prob, config.attack_mode, job.seed))
    params, report = fit(dataset, job.hyperparams, config.variant)
    if report.test_acc is None or report.test_trace is None:
        msg = f"dataset {dataset.name} has no test nodes"
        raise DatasetError(msg)
    run = SeedRun(
        seed=job.seed,
        test_acc=report.test_acc,
        wall_time=report.wall_time,
        iterations_run=report.test_trace.iterations_run,
        delta_seq=list(report.test_trace.delta_a_per_iter),
        best_epoch=report.best_epoch,
    )
    trace = None
    if job.trace:
        ctx = prepare_forward(dataset, job.hyperparams, config.variant)
        fixed = fixed_iteration_accuracies(params, dataset, job.hyperparams, config.variant, ctx=ctx)
        trace = {
            "type": "trace",
            "seed": job.seed,
            "iterations_run": run.iterations_run,
            "delta_seq": run.delta_seq,
            "iteration_acc": iteration_accuracies(report.test_trace, dataset),
            "stop_acc": report.test_acc,
            "fixed_acc": {str(t): acc for t, acc in fixed.items()},
        }
    return SeedOutcome(run=run, epochs=report.to_records(), trace=trace)


def run_jobs(jobs: Sequence[SeedJob], workers: int) -> list[SeedOutcome]:
    """Run jobs, in parallel when asked; results keep job order."""
    if workers <= 1 or len(jobs) <= 1:
        return [run_seed(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers, mp_context=multiprocessing.get_context("spawn")) as pool:
        return list(pool.map(run_seed, jobs))


def _stem(config: RunConfig) -> str:
    return f"{config.dataset}-{config.variant}"


def _write_epoch_logs(out: Path, stem: str, outcomes: Sequence[SeedOutcome]) -> None:
    for outcome in outcomes:
        write_records(out / f"{stem}.seed{outcome.run.seed}.epochs.jsonl", outcome.epochs)


def _summarize(
    command: str,
    config: RunConfig,
    hp: HyperParams,
    outcomes: Sequence[SeedOutcome],
    **extra: Any,  # noqa: ANN401
) -> MetricsRecord:
    record = MetricsRecord.from_runs(
        command,
        config.dataset,
        config.variant,
        hp.to_dict(),
        [outcome.run for outcome in outcomes],
        **extra,
    )
    std = "n/a" if record.acc_std is None else f"{record.acc_std:.4f}"
    _logger.warning(
        "%s %s %s%s: accuracy %.4f (std %s) over %d seeds",
        command,
        config.dataset,
        config.variant,
        "".join(f" {key}={value}" for key, value in extra.items()),
        record.acc_mean,
        std,
        len(record.seeds),
    )
    return record


def _seed_jobs(config: RunConfig, hp: HyperParams, **kwargs: Any) -> list[SeedJob]:  # noqa: ANN401
    return [SeedJob(config=config, seed=seed, hyperparams=replace(hp, seed=seed), **kwargs) for seed in sorted(config.seeds)]


def cmd_train(config: RunConfig) -> MetricsRecord:
    """Train and test every seed; write the metrics and per-epoch logs."""
    out = get_output_dir(config.out_dir, "train")
    outcomes = run_jobs(_seed_jobs(config, config.hyperparams), config.workers)
    _write_epoch_logs(out, _stem(config), outcomes)
    record = _summarize("train", config, config.hyperparams, outcomes)
    write_records(out / f"{_stem(config)}.metrics.jsonl", [record])
    return record


def cmd_attack(config: RunConfig) -> list[MetricsRecord]:
    """Train on randomly perturbed input graphs, one record per probability."""
    out = get_output_dir(config.out_dir, "attack")
    records = []
    for prob in config.attack_probs:
        outcomes = run_jobs(_seed_jobs(config, config.hyperparams, attack_prob=prob), config.workers)
        records.append(
            _summarize(
                "attack",
                config,
                config.hyperparams,
                outcomes,
                attack_mode=config.attack_mode,
                attack_prob=prob,
            ),
        )
    write_records(out / f"{_stem(config)}.{config.attack_mode}.metrics.jsonl", records)
    return records


def cmd_trace(config: RunConfig) -> list[dict[str, Any]]:
    """Train, then record the inference convergence of every seed."""
    out = get_output_dir(config.out_dir, "trace")
    outcomes = run_jobs(_seed_jobs(config, config.hyperparams, trace=True), config.workers)
    traces = [outcome.trace for outcome in outcomes if outcome.trace is not None]
    write_records(out / f"{_stem(config)}.trace.jsonl", traces)
    return traces


def cmd_sweep(config: RunConfig, param: str, values: Sequence[Any]) -> list[MetricsRecord]:
    """Train once per value of one hyperparameter."""
    name = ALIASES.get(param, param)
    if name not in HyperParams.field_names() or name == "seed":
        msg = f"cannot sweep {param!r}"
        raise ConfigError(msg)
    out = get_output_dir(config.out_dir, "sweep")
    records = []
    for value in values:
        hp = replace(config.hyperparams, **{name: value})
        outcomes = run_jobs(_seed_jobs(config, hp), config.workers)
        records.append(_summarize("sweep", config, hp, outcomes, param=name, value=value))
    write_records(out / f"{_stem(config)}.{name}.metrics.jsonl", records)
    return records


def cmd_export_graph(config: RunConfig) -> Path:
    """Train on the first seed and write the learned structure as an edge list."""
    seed = sorted(config.seeds)[0]
    hp = config.with_seed(seed)
    dataset = load_dataset_for(config, seed)
    params, _ = fit(dataset, hp, config.variant)
    _, trace = evaluate(params, dataset, hp, config.variant)
    out = get_output_dir(config.out_dir, "export")
    if trace.final_structure is None:  # pragma: no cover
        msg = "forward pass kept no structure"
        raise ItergraphError(msg)
    if config.variant == "idgl":
        path = out / f"{_stem(config)}.seed{seed}.edges"
        count = write_edge_list(path, trace.final_structure)
    else:
        path = out / f"{_stem(config)}.seed{seed}.anchors.edges"
        count = write_bipartite_edge_list(path, trace.final_structure, trace.anchor_idx)
    _logger.warning("Wrote %d learned edges to %s", count, path)
    return path


def cmd_bench_scaling(  # noqa: PLR0913
    sizes: Sequence[int],
    s: int,
    dim: int,
    reps: int,
    out_dir: Path,
    *,
    seed: int = 0,
) -> tuple[list[dict[str, Any]], dict[str, float]]:
    """Time both forward passes per size; write the table and fitted slopes."""
    rows = bench_scaling(sizes, s, dim, reps, seed=seed)
    out = get_output_dir(out_dir, "bench")
    write_csv(out / "scaling.csv", rows)
    slopes = fit_slopes(rows) if len(rows) >= 2 else {}  # noqa: PLR2004
    write_records(out / "scaling.jsonl", [{"type": "slopes", "sizes": list(sizes), "s": s, "dim": dim, **slopes}])
    for name, slope in slopes.items():
        _logger.warning("%s log-log slope %.2f", name, slope)
    return rows, slopes


def cmd_gradcheck(seed: int, *, end_to_end: bool = True) -> list[CheckResult]:
    """Run the finite-difference suite; raise when any check fails."""
    results = run_gradcheck(seed, end_to_end=end_to_end)
    assert_passed(results)
    _logger.warning("All %d gradient checks passed", len(results))
    return results


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    data: dict[str, Any] = {}
    for key in ("dataset", "variant", "seeds", "seed", "out_dir", "data_dir", "workers", "attack_mode", "attack_probs"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    for key in HYPER_FLAGS:
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if getattr(args, "no_reg", False):
        data.update(alpha=0.0, beta=0.0, gamma=0.0)
    return data


def _run_config(args: argparse.Namespace) -> RunConfig:
    return load_run_config(args.config, _overrides(args))


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="flat key = value configuration file")
    parser.add_argument("--dataset", help="dataset name (wine, cancer, digits, cora, ...)")
    parser.add_argument("--variant", choices=VARIANTS)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--seeds", type=int, nargs="+")
    parser.add_argument("--out-dir", dest="out_dir", type=Path)
    parser.add_argument("--data-dir", dest="data_dir", type=Path)
    parser.add_argument("--workers", type=int, help="parallel seed workers")
    parser.add_argument("--no-reg", dest="no_reg", action="store_true", help="set alpha, beta and gamma to 0")
    parser.add_argument("--t-max", dest="t_max", type=int, help="maximal number of iterations")
    parser.add_argument("--lambda", dest="lambda_", type=float, help="weight of the initial graph")
    parser.add_argument("--eta", type=float)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--beta", type=float)
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--eps", type=float)
    parser.add_argument("--m", type=int, help="number of metric heads")
    parser.add_argument("--delta", type=float, help="stopping threshold")
    parser.add_argument("--k", type=int, help="kNN size when there is no input graph")
    parser.add_argument("--anchors", dest="s", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--patience", type=int)
    parser.add_argument("--lr", type=float)


def _train(args: argparse.Namespace) -> None:
    cmd_train(_run_config(args))


def _attack(args: argparse.Namespace) -> None:
    cmd_attack(_run_config(args))


def _trace(args: argparse.Namespace) -> None:
    cmd_trace(_run_config(args))


def _sweep(args: argparse.Namespace) -> None:
    cmd_sweep(_run_config(args), args.param, [decode_value(value) for value in args.values])


def _export(args: argparse.Namespace) -> None:
    cmd_export_graph(_run_config(args))


def _bench(args: argparse.Namespace) -> None:
    cmd_bench_scaling(args.sizes, args.anchors, args.dim, args.reps, args.out_dir, seed=args.seed)


def _gradcheck(args: argparse.Namespace) -> None:
    cmd_gradcheck(args.seed, end_to_end=not args.ops_only)


def build_parser() -> argparse.ArgumentParser:
    """Return the argument parser with every subcommand."""
    parser = argparse.ArgumentParser(prog="itergraph", description="Iterative graph structure learning for GNNs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("-q", "--quiet", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train and test over seeds")
    _add_run_options(train)
    train.set_defaults(func=_train)

    attack = sub.add_parser("attack", help="train on randomly perturbed input graphs")
    _add_run_options(attack)
    attack.add_argument("--attack-mode", dest="attack_mode", choices=("delete", "add"))
    attack.add_argument("--attack-prob", dest="attack_probs", type=float, nargs="+")
    attack.set_defaults(func=_attack)

    trace = sub.add_parser("trace", help="record convergence of the inference loop")
    _add_run_options(trace)
    trace.set_defaults(func=_trace)

    sweep = sub.add_parser("sweep", help="train once per value of one hyperparameter")
    _add_run_options(sweep)
    sweep.add_argument("--param", required=True)
    sweep.add_argument("--values", required=True, nargs="+")
    sweep.set_defaults(func=_sweep)

    export = sub.add_parser("export-graph", help="write the learned graph of a trained model")
    _add_run_options(export)
    export.set_defaults(func=_export)

    bench = sub.add_parser("bench-scaling", help="time forward passes on growing synthetic graphs")
    bench.add_argument("--sizes", type=int, nargs="+", default=[500, 1000, 2000, 4000])
    bench.add_argument("--anchors", type=int, default=100)
    bench.add_argument("--dim", type=int, default=16)
    bench.add_argument("--reps", type=int, default=3)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out-dir", dest="out_dir", type=Path, default=Path("out"))
    bench.set_defaults(func=_bench)

    gradcheck = sub.add_parser("gradcheck", help="compare gradients with finite differences")
    gradcheck.add_argument("--seed", type=int, default=0)
    gradcheck.add_argument("--ops-only", dest="ops_only", action="store_true")
    gradcheck.set_defaults(func=_gradcheck)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Run the command line; return the process exit code."""
    args = build_parser().parse_args(argv)
    initialize_logger(args.verbose - args.quiet)
    try:
        args.func(args)
    except ItergraphError as exc:
        _logger.error("%s", exc)  # noqa: TRY400
        return exc.code
    return 0


__all__ = [
    "build_parser",
    "cmd_attack",
    "cmd_bench_scaling",
    "cmd_export_graph",
    "cmd_gradcheck",
    "cmd_sweep",
    "cmd_trace",
    "cmd_train",
    "initialize_logger",
    "main",
]
