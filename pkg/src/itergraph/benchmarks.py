"""Forward-pass timing on synthetic graphs of growing size."""

from __future__ import annotations

import csv
import logging
import time
from typing import TYPE_CHECKING, Any

import numpy as np
import scipy.sparse as sp

from itergraph.errors import ConfigError
from itergraph.learner import AnchorAffinity
from itergraph.loaders import GraphDataset
from itergraph.regularization import anchor_graph
from itergraph.trainer import HyperParams, IdglParams, forward, prepare_forward

if TYPE_CHECKING:  # pragma: no cover
    from collections.abc import Sequence
    from pathlib import Path

    from itergraph.trainer import ForwardResult
    from itergraph.types import Variant

_logger = logging.getLogger(__name__)

BENCH_FIELDS = ("n", "s", "dim", "dense_seconds", "anchor_seconds", "anchor_graph_seconds")


def ring_adjacency(n: int, width: int = 2) -> sp.csr_matrix:
    """Ring lattice linking every node to its ``width`` neighbours on each side.

    Needs ``n > 2 * width``.
    """
    rows = np.repeat(np.arange(n), width)
    cols = (rows + np.tile(np.arange(1, width + 1), n)) % n
    upper = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    out = ((upper + upper.T) > 0).astype(np.float64).tocsr()
    out.eliminate_zeros()
    return out


def synthetic_dataset(n: int, dim: int, *, n_classes: int = 3, seed: int = 0) -> GraphDataset:
    """Positive random features on a sparse ring graph."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.1, 1.0, size=(n, dim))
    y = rng.integers(0, n_classes, size=n)
    idx = np.arange(n)
    return GraphDataset(
        x=x,
        y=y,
        train=idx[: n // 2],
        dev=idx[n // 2 : 3 * n // 4],
        test=idx[3 * n // 4 :],
        n_classes=n_classes,
        a0=ring_adjacency(n),
        name=f"synthetic-{n}",
    )


def bench_hyperparams(s: int, *, t_max: int = 2, m: int = 1) -> HyperParams:
    """Settings that time message passing without regularization."""
    return HyperParams(lambda_=0.5, eta=0.5, eps=0.0, m=m, t_max=t_max, s=s, dropout=0.0, iter_dropout=0.0)


def _best_of(reps: int, run: Any) -> float:  # noqa: ANN401
    best = float("inf")
    for _ in range(reps):
        started = time.perf_counter()
        run()
        best = min(best, time.perf_counter() - started)
    return best


def time_forward(dataset: GraphDataset, hp: HyperParams, variant: Variant, reps: int) -> float:
    """Best wall time of one fixed-length inference forward pass."""
    ctx = prepare_forward(dataset, hp, variant)
    params = IdglParams.initialize(dataset.d, dataset.n_classes, hp, np.random.default_rng(hp.seed))
    return _best_of(
        reps,
        lambda: forward(params, dataset, hp, "eval", ctx, dynamic_stop=False),
    )


def time_anchor_graph(n: int, s: int, reps: int, *, seed: int = 0) -> float:
    """Best wall time of building ``RᵀΔ⁻¹R`` from a random affinity."""
    r = np.random.default_rng(seed).uniform(0.0, 1.0, size=(n, s))
    aff = AnchorAffinity.from_array(r)
    return _best_of(reps, lambda: anchor_graph(aff))


def allocates_node_square(result: ForwardResult, n: int) -> bool:
    """Return True when any value created during a forward pass is n×n.

    Inputs and results are both counted, whether or not gradients flow
    through them, so eval-mode passes are covered too.
    """
    return (n, n) in result.tape.value_shapes


def bench_scaling(
    sizes: Sequence[int],
    s: int,
    dim: int,
    reps: int,
    *,
    seed: int = 0,
) -> list[dict[str, Any]]:
    """Time dense and anchor forward passes for every graph size."""
    if list(sizes) != sorted(sizes) or len(set(sizes)) != len(sizes):
        msg = "sizes must be strictly ascending"
        raise ConfigError(msg)
    if min(sizes) < s:
        msg = f"every size must hold the {s} anchors"
        raise ConfigError(msg)
    hp = bench_hyperparams(s)
    rows = []
    for n in sizes:
        dataset = synthetic_dataset(n, dim, seed=seed)
        row = {
            "n": n,
            "s": s,
            "dim": dim,
            "dense_seconds": time_forward(dataset, hp, "idgl", reps),
            "anchor_seconds": time_forward(dataset, hp, "idgl-anch", reps),
            "anchor_graph_seconds": time_anchor_graph(n, s, reps, seed=seed),
        }
        _logger.info(
            "n=%d dense %.4fs anchor %.4fs",
            n,
            row["dense_seconds"],
            row["anchor_seconds"],
        )
        rows.append(row)
    return rows


def fit_slopes(rows: Sequence[dict[str, Any]]) -> dict[str, float]:
    """Log-log slope of each timing column against n."""
    log_n = np.log([row["n"] for row in rows])
    return {
        column.removesuffix("_seconds"): float(np.polyfit(log_n, np.log([row[column] for row in rows]), 1)[0])
        for column in BENCH_FIELDS
        if column.endswith("_seconds")
    }


def write_csv(path: Path, rows: Sequence[dict[str, Any]]) -> None:
    """Write the timing table."""
    with path.open("w", encoding="utf-8", newline="") as out:
        writer = csv.DictWriter(out, fieldnames=BENCH_FIELDS)
        writer.writeheader()
        writer.writerows(rows)


__all__ = [
    "allocates_node_square",
    "bench_hyperparams",
    "bench_scaling",
    "fit_slopes",
    "ring_adjacency",
    "synthetic_dataset",
    "time_anchor_graph",
    "time_forward",
    "write_csv",
]
