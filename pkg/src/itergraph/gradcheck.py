"""Finite-difference verification of every differentiable operation."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import scipy.sparse as sp

from itergraph import autodiff as ad
from itergraph.autodiff import Tape, relative_error
from itergraph.benchmarks import ring_adjacency
from itergraph.errors import GradcheckError
from itergraph.learner import (
    AnchorAffinity,
    MetricHeads,
    anchor_affinity,
    combine_graphs,
    epsilon_sparsify,
    multihead_cosine,
)
from itergraph.loaders import GraphDataset
from itergraph.message_passing import mp12
from itergraph.regularization import (
    RegWeights,
    anchor_reg_loss,
    connectivity_sparsity,
    dirichlet_energy,
)
from itergraph.trainer import HyperParams, IdglParams, forward, prepare_forward

if TYPE_CHECKING:  # pragma: no cover
    from collections.abc import Callable, Sequence

    from itergraph.autodiff import Var
    from itergraph.types import FloatArray, Variant

    Builder = Callable[[Tape, Sequence[Var]], Var]
    Case = tuple[list[FloatArray], Builder]

_logger = logging.getLogger(__name__)

STEP = 1e-5
OP_TOLERANCE = 1e-5
END_TO_END_TOLERANCE = 1e-4
# one-sided slopes further apart than this mark a kink; such entries are skipped
KINK_TOLERANCE = 1e-3


@dataclass
class CheckResult:
    """Outcome of one gradient comparison."""

    name: str
    max_rel_error: float
    tolerance: float
    skipped_kinks: int = 0

    @property
    def passed(self) -> bool:
        """Return True when within tolerance."""
        return self.max_rel_error < self.tolerance


def _weighted_scalar(out: Var, rng: np.random.Generator) -> Var:
    """Reduce to a scalar with random weights so every entry matters."""
    if out.shape == (1, 1):
        return out
    return ad.inner(out, rng.uniform(0.5, 1.5, size=out.shape))


def _differences(
    fn: Callable[[FloatArray], float],
    x: FloatArray,
    h: float,
) -> tuple[FloatArray, np.ndarray]:
    """Central differences and a mask of entries sitting on a kink."""
    central = np.zeros_like(x)
    kinks = np.zeros(x.shape, dtype=bool)
    shifted = np.array(x, dtype=np.float64)
    base = fn(shifted)
    for index in np.ndindex(*x.shape):
        original = shifted[index]
        shifted[index] = original + h
        upper = fn(shifted)
        shifted[index] = original - h
        lower = fn(shifted)
        shifted[index] = original
        central[index] = (upper - lower) / (2.0 * h)
        forward_slope = (upper - base) / h
        backward_slope = (base - lower) / h
        kinks[index] = abs(forward_slope - backward_slope) > KINK_TOLERANCE * max(1.0, abs(central[index]))
    return central, kinks


def check_case(name: str, inputs: list[FloatArray], build: Builder, tolerance: float = OP_TOLERANCE) -> CheckResult:
    """Compare tape gradients of ``build`` with central differences."""
    tape = Tape()
    leaves = [tape.leaf(value) for value in inputs]
    loss = build(tape, leaves)
    tape.backward(loss)

    worst = 0.0
    skipped = 0
    for i, leaf in enumerate(leaves):

        def evaluate(value: FloatArray, slot: int = i) -> float:
            fresh = Tape(checked=False)
            args = [fresh.leaf(value if j == slot else inputs[j]) for j in range(len(inputs))]
            return build(fresh, args).item()

        numeric, kinks = _differences(evaluate, inputs[i], STEP)
        skipped += int(kinks.sum())
        analytic = np.where(kinks, 0.0, leaf.grad)
        worst = max(worst, relative_error(analytic, np.where(kinks, 0.0, numeric)))
    if skipped:
        _logger.debug("%s: skipped %d entries at kinks", name, skipped)
    return CheckResult(name=name, max_rel_error=worst, tolerance=tolerance, skipped_kinks=skipped)


def _unit(rng: np.random.Generator, *shape: int) -> FloatArray:
    return rng.uniform(-1.0, 1.0, size=shape)


def _positive(rng: np.random.Generator, *shape: int) -> FloatArray:
    return rng.uniform(0.2, 1.0, size=shape)


def _binary(rng: np.random.Generator, fn: Callable[[Var, Var], Var], shape_a: tuple[int, int], shape_b: tuple[int, int]) -> Case:
    seed_seq = np.random.SeedSequence(int(rng.integers(2**32)))
    return (
        [_unit(rng, *shape_a), _unit(rng, *shape_b)],
        lambda _t, v: _weighted_scalar(fn(v[0], v[1]), np.random.default_rng(seed_seq)),
    )


def _unary(rng: np.random.Generator, fn: Callable[[Var], Var], value: FloatArray) -> Case:
    seed_seq = np.random.SeedSequence(int(rng.integers(2**32)))
    return [value], lambda _t, v: _weighted_scalar(fn(v[0]), np.random.default_rng(seed_seq))


def _case_spmm(rng: np.random.Generator) -> Case:
    s = sp.random(5, 4, density=0.4, random_state=np.random.default_rng(rng.integers(2**32)), format="csr")
    return _unary(rng, lambda b: ad.spmm(s, b), _unit(rng, 4, 3))


def _case_cross_entropy(rng: np.random.Generator) -> Case:
    labels = rng.integers(0, 3, size=6)
    mask = np.array([0, 2, 3, 5])
    return [_unit(rng, 6, 3)], lambda _t, v: ad.softmax_cross_entropy(v[0], labels, mask)


def _case_take_rows(rng: np.random.Generator) -> Case:
    idx = np.array([0, 2, 2, 4])
    return _unary(rng, lambda a: ad.take_rows(a, idx), _unit(rng, 5, 3))


def _case_shared(rng: np.random.Generator) -> Case:
    # one value feeding three consumers
    return _unary(rng, lambda a: ad.add(ad.hadamard(a, a), ad.matmul(a, ad.transpose(a))), _unit(rng, 4, 4))


def _case_cosine(rng: np.random.Generator) -> Case:
    seed_seq = np.random.SeedSequence(int(rng.integers(2**32)))
    return (
        [_unit(rng, 6, 5), _positive(rng, 3, 5)],
        lambda _t, v: _weighted_scalar(multihead_cosine(v[0], MetricHeads(v[1])), np.random.default_rng(seed_seq)),
    )


def _case_anchor_cosine(rng: np.random.Generator) -> Case:
    seed_seq = np.random.SeedSequence(int(rng.integers(2**32)))
    idx = np.array([1, 3, 4])
    return (
        [_positive(rng, 7, 4), _positive(rng, 2, 4)],
        lambda _t, v: _weighted_scalar(anchor_affinity(v[0], idx, MetricHeads(v[1]), 0.0).r, np.random.default_rng(seed_seq)),
    )


def _case_graph_chain(rng: np.random.Generator) -> Case:
    seed_seq = np.random.SeedSequence(int(rng.integers(2**32)))
    l0 = rng.uniform(0.0, 1.0, size=(6, 6))
    x = _positive(rng, 6, 4)

    def build(tape: Tape, v: Sequence[Var]) -> Var:
        heads = MetricHeads(v[0])
        a_1 = epsilon_sparsify(multihead_cosine(tape.constant(x), heads), 0.0)
        a_t = epsilon_sparsify(multihead_cosine(v[1], heads), 0.0)
        return _weighted_scalar(combine_graphs(l0, a_t, a_1, 0.3, 0.6), np.random.default_rng(seed_seq))

    return [_positive(rng, 2, 4), _positive(rng, 6, 4)], build


def _case_mp12(rng: np.random.Generator) -> Case:
    seed_seq = np.random.SeedSequence(int(rng.integers(2**32)))

    def build(_tape: Tape, v: Sequence[Var]) -> Var:
        return _weighted_scalar(mp12(v[1], AnchorAffinity.from_var(v[0])), np.random.default_rng(seed_seq))

    return [_positive(rng, 6, 2), _unit(rng, 6, 3)], build


def _case_dirichlet(rng: np.random.Generator) -> Case:
    x = _unit(rng, 5, 3)
    return [_positive(rng, 5, 5)], lambda _t, v: dirichlet_energy(ad.symmetrize(v[0]), x)


def _case_connectivity(rng: np.random.Generator) -> Case:
    return [_positive(rng, 5, 5)], lambda _t, v: connectivity_sparsity(v[0], 0.7, 0.4)


def _case_anchor_reg(rng: np.random.Generator) -> Case:
    x_anchor = _unit(rng, 3, 4)
    rw = RegWeights(alpha=0.5, beta=0.3, gamma=0.2)
    return [_positive(rng, 6, 3)], lambda _t, v: anchor_reg_loss(AnchorAffinity.from_var(v[0]), x_anchor, rw)


CHECKS: dict[str, Callable[[np.random.Generator], Case]] = {
    "matmul": lambda rng: _binary(rng, ad.matmul, (4, 3), (3, 2)),
    "spmm": _case_spmm,
    "add": lambda rng: _binary(rng, ad.add, (3, 4), (3, 4)),
    "sub": lambda rng: _binary(rng, ad.sub, (3, 4), (3, 4)),
    "hadamard": lambda rng: _binary(rng, ad.hadamard, (3, 4), (3, 4)),
    "scale": lambda rng: _unary(rng, lambda a: ad.scale(a, -1.7), _unit(rng, 3, 4)),
    "relu": lambda rng: _unary(rng, ad.relu, _unit(rng, 4, 4)),
    "log": lambda rng: _unary(rng, ad.log, _positive(rng, 3, 3)),
    "square": lambda rng: _unary(rng, ad.square, _unit(rng, 3, 3)),
    "sum": lambda rng: ([_unit(rng, 3, 4)], lambda _t, v: ad.sum_all(v[0])),
    "mean": lambda rng: ([_unit(rng, 3, 4)], lambda _t, v: ad.mean_all(v[0])),
    "frobenius_sq": lambda rng: ([_unit(rng, 3, 4)], lambda _t, v: ad.frobenius_sq(v[0])),
    "transpose": lambda rng: _unary(rng, ad.transpose, _unit(rng, 3, 5)),
    "take_rows": _case_take_rows,
    "mul_row": lambda rng: _binary(rng, ad.mul_row, (4, 3), (1, 3)),
    "scale_rows": lambda rng: _binary(rng, ad.scale_rows, (4, 3), (4, 1)),
    "row_sums": lambda rng: _unary(rng, ad.row_sums, _unit(rng, 4, 3)),
    "col_sums": lambda rng: _unary(rng, ad.col_sums, _unit(rng, 4, 3)),
    "mean_rows": lambda rng: _unary(rng, ad.mean_rows, _unit(rng, 4, 3)),
    "reciprocal": lambda rng: _unary(rng, ad.reciprocal, _positive(rng, 3, 3)),
    "symmetrize": lambda rng: _unary(rng, ad.symmetrize, _unit(rng, 4, 4)),
    "gram": lambda rng: _unary(rng, ad.gram, _unit(rng, 4, 3)),
    "normalize_rows_l2": lambda rng: _unary(rng, ad.normalize_rows_l2, _unit(rng, 4, 3)),
    "row_normalize": lambda rng: _unary(rng, ad.row_normalize, _positive(rng, 4, 4)),
    "softmax_cross_entropy": _case_cross_entropy,
    "shared_consumers": _case_shared,
    "multihead_cosine": _case_cosine,
    "anchor_affinity": _case_anchor_cosine,
    "graph_chain": _case_graph_chain,
    "mp12": _case_mp12,
    "dirichlet_energy": _case_dirichlet,
    "connectivity_sparsity": _case_connectivity,
    "anchor_reg_loss": _case_anchor_reg,
}


def toy_problem(seed: int, *, n: int = 8, d: int = 4) -> GraphDataset:
    """Small positive-feature graph used by the end-to-end check."""
    rng = np.random.default_rng(seed)
    idx = np.arange(n)
    return GraphDataset(
        x=rng.uniform(0.1, 1.0, size=(n, d)),
        y=idx % 2,
        train=idx[: n // 2],
        dev=idx[n // 2 : 3 * n // 4],
        test=idx[3 * n // 4 :],
        n_classes=2,
        a0=ring_adjacency(n),
        name="gradcheck-toy",
    )


def toy_hyperparams(seed: int, *, t_max: int = 3, m: int = 2) -> HyperParams:
    """Settings of the end-to-end check: every loss term switched on."""
    return HyperParams(
        lambda_=0.5,
        eta=0.5,
        alpha=0.2,
        beta=0.1,
        gamma=0.1,
        eps=0.0,
        m=m,
        t_max=t_max,
        s=3,
        dropout=0.0,
        iter_dropout=0.0,
        seed=seed,
    )


def check_end_to_end(seed: int, variant: Variant = "idgl") -> CheckResult:
    """Gradient of the unrolled total loss with respect to every parameter."""
    dataset = toy_problem(seed)
    hp = toy_hyperparams(seed)
    ctx = prepare_forward(dataset, hp, variant)
    params = IdglParams.initialize(dataset.d, dataset.n_classes, hp, np.random.default_rng(seed))
    analytic = forward(params, dataset, hp, "train", ctx, dynamic_stop=False).gradients()

    worst = 0.0
    skipped = 0
    for name, value in params.as_dict().items():

        def loss_at(shifted: FloatArray, key: str = name) -> float:
            values = params.as_dict() | {key: shifted}
            trial = IdglParams.from_dict(values)
            return forward(trial, dataset, hp, "eval", ctx, dynamic_stop=False).loss.item()

        numeric, kinks = _differences(loss_at, value, STEP)
        skipped += int(kinks.sum())
        worst = max(
            worst,
            relative_error(np.where(kinks, 0.0, analytic[name]), np.where(kinks, 0.0, numeric)),
        )
    return CheckResult(
        name=f"end_to_end[{variant}]",
        max_rel_error=worst,
        tolerance=END_TO_END_TOLERANCE,
        skipped_kinks=skipped,
    )


def run_gradcheck(
    seed: int,
    *,
    names: Sequence[str] | None = None,
    end_to_end: bool = True,
) -> list[CheckResult]:
    """Run the per-operation suite and the end-to-end checks."""
    results = []
    for name in names or CHECKS:
        rng = np.random.default_rng([seed, len(results)])
        inputs, build = CHECKS[name](rng)
        result = check_case(name, inputs, build)
        _logger.info("%-24s max rel err %.2e %s", name, result.max_rel_error, "ok" if result.passed else "FAILED")
        results.append(result)
    if end_to_end:
        for variant in ("idgl", "idgl-anch"):
            result = check_end_to_end(seed, variant)
            _logger.info("%-24s max rel err %.2e", result.name, result.max_rel_error)
            results.append(result)
    return results


def assert_passed(results: Sequence[CheckResult]) -> None:
    """Raise naming every failing check."""
    failed = [result for result in results if not result.passed]
    if failed:
        detail = ", ".join(f"{r.name} ({r.max_rel_error:.2e})" for r in failed)
        msg = f"gradient check failed for {detail}"
        raise GradcheckError(msg)


__all__ = [
    "CHECKS",
    "CheckResult",
    "assert_passed",
    "check_case",
    "check_end_to_end",
    "run_gradcheck",
    "toy_hyperparams",
    "toy_problem",
]
