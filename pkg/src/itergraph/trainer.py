"""Iterative graph and embedding learning, training loops and evaluation."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from typing import TYPE_CHECKING, Any

import numpy as np

from itergraph.autodiff import (
    Tape,
    Var,
    add,
    dropout,
    mean_rows,
    row_normalize,
    scale,
    softmax_cross_entropy,
)
from itergraph.constants import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_DROPOUT,
    DEFAULT_EPOCHS,
    DEFAULT_LR,
    DEFAULT_PATIENCE,
    DEFAULT_WEIGHT_DECAY,
    HIDDEN_SIZE,
    VARIANTS,
)
from itergraph.errors import ConfigError, DivergenceError, InvalidMaskError
from itergraph.graph import InitialGraph, densify, prepare_graph
from itergraph.learner import (
    AnchorAffinity,
    MetricHeads,
    anchor_affinity,
    combine_graphs,
    learn_graph,
    sample_anchors,
)
from itergraph.message_passing import GcnWeights, Propagator, gcn_layer, hybrid_mp
from itergraph.optim import AdamState, adam_step
from itergraph.regularization import (
    RegWeights,
    anchor_reg_loss,
    graph_reg_loss,
    pairwise_sq_dists,
)

if TYPE_CHECKING:  # pragma: no cover
    from collections.abc import Callable, Sequence

    from itergraph.loaders import GraphDataset
    from itergraph.types import FloatArray, IntArray, Mode, Variant

_logger = logging.getLogger(__name__)

PARAM_NAMES = ("heads_feat", "heads_emb", "w1", "w2")


@dataclass(frozen=True)
class HyperParams:  # pylint: disable=too-many-instance-attributes
    """Model, regularization, stopping and optimizer settings of one run."""

    lambda_: float = 0.8
    eta: float = 0.1
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    eps: float = 0.0
    m: int = 1
    delta: float = 1e-3
    t_max: int = 10
    k: int | None = None
    s: int | None = None
    anchor_ratio: float | None = None
    lr: float = DEFAULT_LR
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    dropout: float = DEFAULT_DROPOUT
    iter_dropout: float = DEFAULT_DROPOUT
    epochs: int = DEFAULT_EPOCHS
    patience: int = DEFAULT_PATIENCE
    seed: int = 0
    hidden: int = HIDDEN_SIZE
    batch_size: int = DEFAULT_BATCH_SIZE
    log_every: int = 50

    def __post_init__(self) -> None:  # noqa: C901
        """Validate ranges."""
        problems = []
        for name in ("lambda_", "eta"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                problems.append(f"{name} must lie in [0, 1]")
        for name in ("alpha", "beta", "gamma", "eps", "weight_decay", "lr"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be non-negative")
        for name in ("dropout", "iter_dropout"):
            if not 0.0 <= getattr(self, name) < 1.0:
                problems.append(f"{name} must lie in [0, 1)")
        if self.delta <= 0:
            problems.append("delta must be positive")
        for name in ("t_max", "m", "epochs", "patience", "hidden", "batch_size", "log_every"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be at least 1")
        if self.k is not None and self.k < 1:
            problems.append("k must be at least 1")
        if self.s is not None and self.s < 1:
            problems.append("s must be at least 1")
        if self.anchor_ratio is not None and not 0.0 < self.anchor_ratio <= 1.0:
            problems.append("anchor_ratio must lie in (0, 1]")
        if problems:
            msg = "; ".join(problems)
            raise ConfigError(msg)

    @property
    def reg_weights(self) -> RegWeights:
        """Return the regularization weights."""
        return RegWeights(alpha=self.alpha, beta=self.beta, gamma=self.gamma)

    def anchors_for(self, n: int) -> int:
        """Return the anchor count for a graph of ``n`` nodes."""
        if self.s is not None:
            if self.s > n:
                _logger.warning("Anchor count %d clipped to the %d available nodes", self.s, n)
                return n
            return self.s
        if self.anchor_ratio is not None:
            return max(1, math.ceil(self.anchor_ratio * n))
        msg = "the anchor variant needs s or anchor_ratio"
        raise ConfigError(msg)

    def to_dict(self) -> dict[str, Any]:
        """Return the fields as a plain mapping."""
        return asdict(self)

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        """Return the accepted field names."""
        return tuple(f.name for f in fields(cls))


def _glorot(fan_in: int, fan_out: int, rng: np.random.Generator) -> FloatArray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class IdglParams:
    """Learned weights: metric heads for both spaces and the GCN layers."""

    heads_feat: FloatArray
    heads_emb: FloatArray
    w1: FloatArray
    w2: FloatArray

    @classmethod
    def initialize(
        cls,
        d: int,
        n_classes: int,
        hp: HyperParams,
        rng: np.random.Generator,
    ) -> IdglParams:
        """Glorot-uniform GCN weights and uniform(0, 1) metric heads."""
        return cls(
            heads_feat=rng.uniform(0.0, 1.0, size=(hp.m, d)),
            heads_emb=rng.uniform(0.0, 1.0, size=(hp.m, hp.hidden)),
            w1=_glorot(d, hp.hidden, rng),
            w2=_glorot(hp.hidden, n_classes, rng),
        )

    def as_dict(self) -> dict[str, FloatArray]:
        """Return the arrays keyed by parameter name."""
        return {name: getattr(self, name) for name in PARAM_NAMES}

    @classmethod
    def from_dict(cls, values: dict[str, FloatArray]) -> IdglParams:
        """Build from arrays keyed by parameter name."""
        return cls(**{name: values[name] for name in PARAM_NAMES})

    def copy(self) -> IdglParams:
        """Return a deep copy."""
        return IdglParams.from_dict({k: v.copy() for k, v in self.as_dict().items()})


@dataclass
class ForwardContext:
    """Per-dataset constants shared by every forward pass of a run."""

    variant: Variant
    graph: InitialGraph
    l0_dense: FloatArray | None = None
    dists: FloatArray | None = None
    anchor_idx: IntArray | None = None
    graph_level: bool = False


@dataclass
class ForwardTrace:
    """What one forward pass did, iteration by iteration."""

    iterations_run: int
    delta_a_per_iter: list[float]
    pred_losses: list[float]
    reg_losses: list[float]
    predictions: FloatArray
    iteration_predictions: list[FloatArray] = field(default_factory=list)
    final_structure: FloatArray | None = None
    anchor_idx: IntArray | None = None


@dataclass
class ForwardResult:
    """A forward trace together with its differentiable total loss."""

    trace: ForwardTrace
    loss: Var
    tape: Tape
    leaves: dict[str, Var]

    def gradients(self) -> dict[str, FloatArray]:
        """Run the reverse sweep and return gradients keyed by parameter name."""
        self.tape.backward(self.loss)
        return {
            name: leaf.grad
            for name, leaf in self.leaves.items()
            if leaf.grad is not None
        }


def _seeded(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


def prepare_forward(
    dataset: GraphDataset,
    hp: HyperParams,
    variant: Variant,
    *,
    graph: InitialGraph | None = None,
    graph_level: bool = False,
) -> ForwardContext:
    """Build the initial graph, distance matrix and anchors for a dataset."""
    if variant not in VARIANTS:
        msg = f"unknown variant {variant!r}, choose from {', '.join(VARIANTS)}"
        raise ConfigError(msg)
    graph = graph or prepare_graph(dataset, hp.k)
    ctx = ForwardContext(variant=variant, graph=graph, graph_level=graph_level)
    if variant == "idgl":
        ctx.l0_dense = densify(graph.l0_sym)
        if hp.alpha > 0:
            ctx.dists = pairwise_sq_dists(dataset.x)
    else:
        s = hp.anchors_for(dataset.n)
        ctx.anchor_idx = sample_anchors(dataset.n, s, _seeded(hp.seed, 2))
        if hp.alpha > 0:
            ctx.dists = pairwise_sq_dists(dataset.x[ctx.anchor_idx])
    return ctx


class _DenseSteps:
    """Node-node graph learning with mixing into a dense adjacency."""

    def __init__(self, ctx: ForwardContext, dataset: GraphDataset, hp: HyperParams, tape: Tape) -> None:
        self.ctx = ctx
        self.x = dataset.x
        self.hp = hp
        self.l0 = tape.constant(ctx.l0_dense, name="l0")
        self.first_normalized: Var | None = None

    def learn(self, v: Var, heads: MetricHeads) -> Var:
        return learn_graph(v, heads, self.hp.eps, strict=False).a

    def propagator(self, a_t: Var, a_1: Var) -> Propagator:
        if self.first_normalized is None:
            self.first_normalized = row_normalize(a_1)
        return combine_graphs(
            self.l0,
            a_t,
            a_1,
            self.hp.lambda_,
            self.hp.eta,
            a_1_normalized=self.first_normalized,
        )

    def reg(self, a: Var) -> Var:
        rw = self.hp.reg_weights
        if rw.is_zero:
            return a.tape.constant(np.zeros((1, 1)))
        return graph_reg_loss(a, self.x, rw, dists=self.ctx.dists, strict=False)

    @staticmethod
    def matrix(a: Var) -> FloatArray:
        return a.value

    @staticmethod
    def normalizer(current: FloatArray, first: FloatArray) -> float:  # noqa: ARG004
        return float(np.sum(first * first))


class _AnchorSteps:
    """Node-anchor affinity learning with hybrid message passing."""

    def __init__(self, ctx: ForwardContext, dataset: GraphDataset, hp: HyperParams, tape: Tape) -> None:  # noqa: ARG002
        self.ctx = ctx
        self.hp = hp
        self.idx = ctx.anchor_idx
        self.x_anchor = dataset.x[ctx.anchor_idx]

    def learn(self, v: Var, heads: MetricHeads) -> AnchorAffinity:
        return anchor_affinity(v, self.idx, heads, self.hp.eps, strict=False)

    def propagator(self, aff_t: AnchorAffinity, aff_1: AnchorAffinity) -> Propagator:
        l0, lam, eta = self.ctx.graph.l0_sym, self.hp.lambda_, self.hp.eta
        return lambda f: hybrid_mp(f, l0, aff_t, aff_1, lam, eta)

    def reg(self, aff: AnchorAffinity) -> Var:
        return anchor_reg_loss(
            aff,
            self.x_anchor,
            self.hp.reg_weights,
            dists=self.ctx.dists,
            strict=False,
        )

    @staticmethod
    def matrix(aff: AnchorAffinity) -> FloatArray:
        return aff.r.value

    @staticmethod
    def normalizer(current: FloatArray, first: FloatArray) -> float:  # noqa: ARG004
        return float(np.sum(current * current))


def _aggregate(values: Sequence[float]) -> float:
    if len(values) == 1:
        return values[0]
    return values[0] + float(np.mean(values[1:]))


def _forward(  # noqa: PLR0913, PLR0915
    params: IdglParams,
    dataset: GraphDataset,
    hp: HyperParams,
    mode: Mode,
    ctx: ForwardContext,
    rng: np.random.Generator | None,
    *,
    dynamic_stop: bool,
) -> ForwardResult:
    training = mode == "train"
    if training and rng is None:
        rng = _seeded(hp.seed, 1)
    tape = Tape(checked=False)
    leaves = {
        name: tape.leaf(value, requires_grad=training, name=name)
        for name, value in params.as_dict().items()
    }
    heads_feat = MetricHeads(leaves["heads_feat"])
    heads_emb = MetricHeads(leaves["heads_emb"])
    gcn = GcnWeights(leaves["w1"], leaves["w2"])
    x = tape.constant(dataset.x, name="x")
    steps = _DenseSteps(ctx, dataset, hp, tape) if ctx.variant == "idgl" else _AnchorSteps(ctx, dataset, hp, tape)

    if ctx.graph_level:
        if dataset.graph_label is None:
            msg = "graph-level training needs a graph label"
            raise InvalidMaskError(msg)
        labels = np.array([dataset.graph_label], dtype=np.int64)
        mask = np.zeros(1, dtype=np.int64)
    else:
        labels, mask = dataset.y, dataset.train

    first = steps.learn(x, heads_feat)
    current = first
    previous_matrix: FloatArray | None = None
    first_matrix = steps.matrix(first)
    z_prev: Var | None = None
    losses: list[Var] = []
    pred_values: list[float] = []
    reg_values: list[float] = []
    deltas: list[float] = []
    per_iter: list[FloatArray] = []

    t = 0
    while True:
        t += 1
        if t > 1:
            current = steps.learn(z_prev, heads_emb)
        adj = steps.propagator(current, first)
        hidden = gcn_layer(x, adj, gcn.w1, "relu")
        rate = hp.dropout if t == 1 else hp.iter_dropout
        dropped = dropout(hidden, rate, rng, training=training) if training else hidden
        logits = gcn_layer(dropped, adj, gcn.w2, "none")
        out = mean_rows(logits) if ctx.graph_level else logits
        pred = softmax_cross_entropy(out, labels, mask)
        reg = steps.reg(current)
        loss = add(pred, reg)
        if not np.isfinite(loss.value).all():
            msg = f"non-finite loss at iteration {t}"
            _logger.error(msg)
            raise DivergenceError(msg, iteration=t)
        losses.append(loss)
        pred_values.append(pred.item())
        reg_values.append(reg.item())
        per_iter.append(out.value.copy())

        matrix = steps.matrix(current)
        go_on = t < hp.t_max
        if t > 1:
            diff = float(np.sum((matrix - previous_matrix) ** 2))
            norm = steps.normalizer(matrix, first_matrix)
            if norm > 0:
                deltas.append(diff / norm)
            else:
                deltas.append(0.0 if diff == 0 else math.inf)
            if dynamic_stop and diff <= hp.delta * norm:
                go_on = False
            _logger.debug("iteration %d: delta=%.3g continue=%s", t, deltas[-1], go_on)
        if not go_on:
            break
        previous_matrix = matrix
        z_prev = hidden

    total = losses[0]
    if len(losses) > 1:
        tail = losses[1]
        for extra in losses[2:]:
            tail = add(tail, extra)
        total = add(total, scale(tail, 1.0 / (len(losses) - 1)))

    trace = ForwardTrace(
        iterations_run=t,
        delta_a_per_iter=deltas,
        pred_losses=pred_values,
        reg_losses=reg_values,
        predictions=per_iter[-1],
        iteration_predictions=per_iter,
        final_structure=matrix.copy(),
        anchor_idx=ctx.anchor_idx,
    )
    return ForwardResult(trace=trace, loss=total, tape=tape, leaves=leaves)


def forward_idgl(  # noqa: PLR0913
    params: IdglParams,
    dataset: GraphDataset,
    hp: HyperParams,
    mode: Mode = "train",
    *,
    ctx: ForwardContext | None = None,
    rng: np.random.Generator | None = None,
    dynamic_stop: bool = True,
) -> ForwardResult:
    """Dense iterative forward pass: learned adjacency mixed with L0."""
    ctx = ctx or prepare_forward(dataset, hp, "idgl")
    return _forward(params, dataset, hp, mode, ctx, rng, dynamic_stop=dynamic_stop)


def forward_idgl_anch(  # noqa: PLR0913
    params: IdglParams,
    dataset: GraphDataset,
    hp: HyperParams,
    mode: Mode = "train",
    *,
    ctx: ForwardContext | None = None,
    rng: np.random.Generator | None = None,
    dynamic_stop: bool = True,
) -> ForwardResult:
    """Anchor iterative forward pass: node-anchor affinities, hybrid passing."""
    ctx = ctx or prepare_forward(dataset, hp, "idgl-anch")
    return _forward(params, dataset, hp, mode, ctx, rng, dynamic_stop=dynamic_stop)


def forward(  # noqa: PLR0913
    params: IdglParams,
    dataset: GraphDataset,
    hp: HyperParams,
    mode: Mode,
    ctx: ForwardContext,
    *,
    rng: np.random.Generator | None = None,
    dynamic_stop: bool = True,
) -> ForwardResult:
    """Dispatch on the variant recorded in ``ctx``."""
    return _forward(params, dataset, hp, mode, ctx, rng, dynamic_stop=dynamic_stop)


def accuracy(predictions: FloatArray, labels: IntArray, mask: IntArray) -> float:
    """Fraction of ``mask`` rows whose arg-max matches the label."""
    if mask.size == 0:
        msg = "accuracy over an empty mask"
        raise InvalidMaskError(msg)
    return float(np.mean(np.argmax(predictions[mask], axis=1) == labels[mask]))


@dataclass
class EpochRecord:
    """Summary of one training epoch."""

    epoch: int
    train_loss: float
    pred_loss: float
    reg_loss: float
    dev_acc: float
    iterations_run: int

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-ready mapping."""
        return {"type": "epoch", **asdict(self)}


@dataclass
class TrainingReport:
    """Epoch history, model selection outcome and final test metrics."""

    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_dev_acc: float = -1.0
    test_acc: float | None = None
    wall_time: float = 0.0
    test_trace: ForwardTrace | None = None

    def to_records(self) -> list[dict[str, Any]]:
        """Epoch records followed by one summary record."""
        records = [epoch.to_dict() for epoch in self.epochs]
        summary: dict[str, Any] = {
            "type": "summary",
            "best_epoch": self.best_epoch,
            "best_dev_acc": self.best_dev_acc,
            "test_acc": self.test_acc,
            "wall_time": self.wall_time,
        }
        if self.test_trace is not None:
            summary["iterations_run"] = self.test_trace.iterations_run
            summary["delta_seq"] = list(self.test_trace.delta_a_per_iter)
        records.append(summary)
        return records


def evaluate(  # noqa: PLR0913
    params: IdglParams,
    dataset: GraphDataset,
    hp: HyperParams,
    variant: Variant,
    *,
    mask: str = "test",
    ctx: ForwardContext | None = None,
    dynamic_stop: bool = True,
) -> tuple[float, ForwardTrace]:
    """Dropout-free forward pass with dynamic stopping; masked accuracy."""
    ctx = ctx or prepare_forward(dataset, hp, variant)
    result = _forward(params, dataset, hp, "eval", ctx, None, dynamic_stop=dynamic_stop)
    nodes = getattr(dataset, mask)
    return accuracy(result.trace.predictions, dataset.y, nodes), result.trace


def iteration_accuracies(trace: ForwardTrace, dataset: GraphDataset, mask: str = "test") -> list[float]:
    """Accuracy after each iteration of one forward pass."""
    nodes = getattr(dataset, mask)
    return [accuracy(pred, dataset.y, nodes) for pred in trace.iteration_predictions]


def fixed_iteration_accuracies(  # noqa: PLR0913
    params: IdglParams,
    dataset: GraphDataset,
    hp: HyperParams,
    variant: Variant,
    *,
    mask: str = "test",
    ctx: ForwardContext | None = None,
) -> dict[int, float]:
    """Accuracy when inference runs exactly T iterations, for T = 1..t_max."""
    ctx = ctx or prepare_forward(dataset, hp, variant)
    return {
        t: evaluate(
            params,
            dataset,
            replace(hp, t_max=t),
            variant,
            mask=mask,
            ctx=ctx,
            dynamic_stop=False,
        )[0]
        for t in range(1, hp.t_max + 1)
    }


def _epoch_context(exc: DivergenceError, epoch: int) -> DivergenceError:
    return DivergenceError(f"epoch {epoch}: {exc}", iteration=exc.iteration, epoch=epoch)


def fit(  # noqa: PLR0913
    dataset: GraphDataset,
    hp: HyperParams,
    variant: Variant = "idgl",
    *,
    graph: InitialGraph | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> tuple[IdglParams, TrainingReport]:
    """Full-batch training with dev-set model selection and early stopping."""
    started = time.perf_counter()
    ctx = prepare_forward(dataset, hp, variant, graph=graph)
    params = IdglParams.initialize(dataset.d, dataset.n_classes, hp, _seeded(hp.seed, 0))
    dropout_rng = _seeded(hp.seed, 1)
    state = AdamState.zeros(params.as_dict())
    report = TrainingReport()
    best = params.copy()
    stale = 0

    for epoch in range(1, hp.epochs + 1):
        try:
            result = _forward(params, dataset, hp, "train", ctx, dropout_rng, dynamic_stop=True)
            grads = result.gradients()
            values, state = adam_step(params.as_dict(), grads, state, hp.lr, hp.weight_decay)
            params = IdglParams.from_dict(values)
            dev_acc, _ = evaluate(params, dataset, hp, variant, mask="dev", ctx=ctx)
        except DivergenceError as exc:
            raise _epoch_context(exc, epoch) from exc
        trace = result.trace
        record = EpochRecord(
            epoch=epoch,
            train_loss=result.loss.item(),
            pred_loss=_aggregate(trace.pred_losses),
            reg_loss=_aggregate(trace.reg_losses),
            dev_acc=dev_acc,
            iterations_run=trace.iterations_run,
        )
        report.epochs.append(record)
        if on_epoch is not None:
            on_epoch(record)
        if epoch % hp.log_every == 0:
            _logger.info(
                "epoch %d: loss %.4f dev %.4f iterations %d",
                epoch,
                record.train_loss,
                dev_acc,
                trace.iterations_run,
            )
        if dev_acc > report.best_dev_acc:
            report.best_dev_acc, report.best_epoch = dev_acc, epoch
            best = params.copy()
            stale = 0
        else:
            stale += 1
            if stale >= hp.patience:
                _logger.info("Early stop at epoch %d, best epoch %d", epoch, report.best_epoch)
                break

    if dataset.test.size:
        report.test_acc, report.test_trace = evaluate(best, dataset, hp, variant, ctx=ctx)
    report.wall_time = time.perf_counter() - started
    return best, report


def _graph_contexts(
    graphs: Sequence[GraphDataset],
    hp: HyperParams,
    variant: Variant,
) -> list[ForwardContext]:
    return [prepare_forward(g, hp, variant, graph_level=True) for g in graphs]


def evaluate_inductive(
    params: IdglParams,
    graphs: Sequence[GraphDataset],
    hp: HyperParams,
    variant: Variant,
    *,
    contexts: Sequence[ForwardContext] | None = None,
) -> tuple[float, list[ForwardTrace]]:
    """Graph classification accuracy; every graph stops on its own."""
    if not graphs:
        msg = "no graphs to evaluate"
        raise InvalidMaskError(msg)
    contexts = contexts or _graph_contexts(graphs, hp, variant)
    traces = []
    hits = 0
    for graph, ctx in zip(graphs, contexts, strict=True):
        trace = _forward(params, graph, hp, "eval", ctx, None, dynamic_stop=True).trace
        hits += int(np.argmax(trace.predictions[0]) == graph.graph_label)
        traces.append(trace)
    return hits / len(graphs), traces


def fit_inductive(
    train_graphs: Sequence[GraphDataset],
    dev_graphs: Sequence[GraphDataset],
    hp: HyperParams,
    variant: Variant = "idgl",
) -> tuple[IdglParams, TrainingReport]:
    """Mini-batch graph classification training.

    Gradients of a batch are averaged in batch order before one Adam step.
    """
    if not train_graphs or not dev_graphs:
        msg = "inductive training needs train and dev graphs"
        raise ConfigError(msg)
    started = time.perf_counter()
    first = train_graphs[0]
    train_ctx = _graph_contexts(train_graphs, hp, variant)
    dev_ctx = _graph_contexts(dev_graphs, hp, variant)
    params = IdglParams.initialize(first.d, first.n_classes, hp, _seeded(hp.seed, 0))
    dropout_rng = _seeded(hp.seed, 1)
    order_rng = _seeded(hp.seed, 3)
    state = AdamState.zeros(params.as_dict())
    report = TrainingReport()
    best = params.copy()
    stale = 0

    for epoch in range(1, hp.epochs + 1):
        order = order_rng.permutation(len(train_graphs))
        losses: list[float] = []
        pred: list[float] = []
        reg: list[float] = []
        iterations: list[int] = []
        for start in range(0, order.size, hp.batch_size):
            batch = order[start : start + hp.batch_size]
            summed: dict[str, FloatArray] = {}
            for index in batch:
                try:
                    result = _forward(
                        params,
                        train_graphs[index],
                        hp,
                        "train",
                        train_ctx[index],
                        dropout_rng,
                        dynamic_stop=True,
                    )
                except DivergenceError as exc:
                    raise _epoch_context(exc, epoch) from exc
                for name, grad in result.gradients().items():
                    summed[name] = grad if name not in summed else summed[name] + grad
                losses.append(result.loss.item())
                pred.append(_aggregate(result.trace.pred_losses))
                reg.append(_aggregate(result.trace.reg_losses))
                iterations.append(result.trace.iterations_run)
            grads = {name: grad / batch.size for name, grad in summed.items()}
            values, state = adam_step(params.as_dict(), grads, state, hp.lr, hp.weight_decay)
            params = IdglParams.from_dict(values)

        dev_acc, _ = evaluate_inductive(params, dev_graphs, hp, variant, contexts=dev_ctx)
        report.epochs.append(
            EpochRecord(
                epoch=epoch,
                train_loss=float(np.mean(losses)),
                pred_loss=float(np.mean(pred)),
                reg_loss=float(np.mean(reg)),
                dev_acc=dev_acc,
                iterations_run=max(iterations),
            ),
        )
        if dev_acc > report.best_dev_acc:
            report.best_dev_acc, report.best_epoch = dev_acc, epoch
            best = params.copy()
            stale = 0
        else:
            stale += 1
            if stale >= hp.patience:
                break

    report.wall_time = time.perf_counter() - started
    return best, report


__all__ = [
    "EpochRecord",
    "ForwardContext",
    "ForwardResult",
    "ForwardTrace",
    "HyperParams",
    "IdglParams",
    "TrainingReport",
    "accuracy",
    "evaluate",
    "evaluate_inductive",
    "fit",
    "fit_inductive",
    "fixed_iteration_accuracies",
    "forward",
    "forward_idgl",
    "forward_idgl_anch",
    "iteration_accuracies",
    "prepare_forward",
]
