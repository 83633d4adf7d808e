"""Reverse-mode automatic differentiation over float64 matrices.

Every value is a 2-D ``numpy`` array. Operations are module-level functions
taking :class:`Var` operands; each one records its backward rule on the
:class:`Tape` that owns the operands. ``Tape.backward`` sweeps the recorded
nodes once, in reverse recording order, accumulating contributions for values
with several consumers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import scipy.sparse as sp

from itergraph.constants import GUARD
from itergraph.errors import (
    DegenerateNormError,
    DegenerateRowError,
    DimensionError,
    DomainError,
    InvalidMaskError,
    NonFiniteError,
    ShapeError,
    TapeError,
)
from itergraph.graph import validate_csr

if TYPE_CHECKING:  # pragma: no cover
    from collections.abc import Callable, Sequence

    from numpy.typing import ArrayLike

    from itergraph.types import BoolArray, CsrSparse, FloatArray, IntArray

    BackwardRule = Callable[[FloatArray], tuple[FloatArray | None, ...]]

_logger = logging.getLogger(__name__)


def as_dense(value: ArrayLike) -> FloatArray:
    """Return a private float64 2-D copy of ``value``.

    Scalars become 1x1 matrices and vectors become single rows.
    """
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(1, -1)
    if arr.ndim != 2:  # noqa: PLR2004
        msg = f"Expected a matrix, got an array with {arr.ndim} dimensions"
        raise ShapeError(msg)
    return arr


class Var:
    """A matrix value registered on a tape."""

    __slots__ = ("grad", "id", "name", "requires_grad", "tape", "value")

    def __init__(
        self,
        tape: Tape,
        id_: int,
        value: FloatArray,
        *,
        requires_grad: bool,
        name: str | None = None,
    ) -> None:
        """Bind a value to its owning tape."""
        self.tape = tape
        self.id = id_
        self.value = value
        self.requires_grad = requires_grad
        self.name = name
        self.grad: FloatArray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        """Return (rows, cols)."""
        rows, cols = self.value.shape
        return rows, cols

    @property
    def rows(self) -> int:
        """Return the row count."""
        return int(self.value.shape[0])

    @property
    def cols(self) -> int:
        """Return the column count."""
        return int(self.value.shape[1])

    def item(self) -> float:
        """Return the value of a 1x1 Var as a float."""
        if self.shape != (1, 1):
            msg = f"item() needs a 1x1 value, got {self.shape}"
            raise ShapeError(msg)
        return float(self.value[0, 0])

    def __repr__(self) -> str:
        """Show id, shape and whether gradients flow."""
        label = f" {self.name!r}" if self.name else ""
        return f"Var(id={self.id}{label}, shape={self.shape}, requires_grad={self.requires_grad})"


@dataclass(frozen=True)
class Node:
    """One recorded operation."""

    op: str
    out: Var
    parents: tuple[Var, ...]
    backward: BackwardRule


class Tape:
    """Ordered record of differentiable operations."""

    def __init__(self, *, checked: bool = True) -> None:
        """Create an empty tape.

        Args:
            checked: reject NaN/Inf in every constructed or computed value.
        """
        self.checked = checked
        self.nodes: list[Node] = []
        # shapes of every leaf and result, gradient or not
        self.value_shapes: list[tuple[int, ...]] = []
        self._sparse: dict[int, CsrSparse] = {}
        self._leaves: list[Var] = []
        self._next_id = 0
        self._consumed = False

    def _new_id(self) -> int:
        self._next_id += 1
        return self._next_id

    def _check_finite(self, op: str, value: FloatArray) -> None:
        if self.checked and not np.isfinite(value).all():
            msg = f"{op} produced non-finite values"
            raise NonFiniteError(msg)

    def leaf(
        self,
        value: ArrayLike,
        *,
        requires_grad: bool = True,
        name: str | None = None,
    ) -> Var:
        """Register an input value."""
        dense = as_dense(value)
        self._check_finite(name or "leaf", dense)
        var = Var(self, self._new_id(), dense, requires_grad=requires_grad, name=name)
        self.value_shapes.append(dense.shape)
        self._leaves.append(var)
        return var

    def constant(self, value: ArrayLike, *, name: str | None = None) -> Var:
        """Register an input that never receives a gradient."""
        return self.leaf(value, requires_grad=False, name=name)

    def sparse_operand(self, s: CsrSparse, *, name: str = "sparse operand") -> CsrSparse:
        """Validate a CSR operand the first time this tape sees it."""
        if id(s) not in self._sparse:
            if not sp.issparse(s) or s.format != "csr":
                msg = f"{name}: expected a CSR matrix, got {type(s).__name__}"
                raise ShapeError(msg)
            validate_csr(s, name=name)
            self._sparse[id(s)] = s
        return s

    @property
    def leaves(self) -> list[Var]:
        """Return the registered inputs in registration order."""
        return list(self._leaves)

    def record(
        self,
        op: str,
        value: FloatArray,
        parents: Sequence[Var],
        backward: BackwardRule,
    ) -> Var:
        """Append an operation result; only differentiable paths are kept."""
        for parent in parents:
            if parent.tape is not self:
                msg = f"{op}: operand {parent!r} belongs to another tape"
                raise TapeError(msg)
        self._check_finite(op, value)
        requires = any(parent.requires_grad for parent in parents)
        out = Var(self, self._new_id(), value, requires_grad=requires)
        self.value_shapes.append(value.shape)
        if requires:
            self.nodes.append(Node(op, out, tuple(parents), backward))
        return out

    def backward(self, loss: Var) -> dict[int, FloatArray]:
        """Populate ``grad`` of every differentiable leaf.

        Returns:
            Mapping from leaf id to its gradient.
        """
        if loss.tape is not self:
            msg = "loss was recorded on another tape"
            raise TapeError(msg)
        if loss.shape != (1, 1):
            msg = f"backward needs a scalar loss, got shape {loss.shape}"
            raise ShapeError(msg)
        if self._consumed:
            msg = "backward already ran on this tape, call reset() first"
            raise TapeError(msg)
        self._consumed = True

        grads: dict[int, FloatArray] = {loss.id: np.ones((1, 1))}
        for node in reversed(self.nodes):
            upstream = grads.pop(node.out.id, None)
            if upstream is None:
                continue
            contributions = node.backward(upstream)
            for parent, contribution in zip(node.parents, contributions, strict=True):
                if contribution is None or not parent.requires_grad:
                    continue
                if contribution.shape != parent.shape:  # pragma: no cover
                    msg = f"{node.op}: gradient shape {contribution.shape} does not match {parent.shape}"
                    raise ShapeError(msg)
                previous = grads.get(parent.id)
                grads[parent.id] = (
                    contribution if previous is None else previous + contribution
                )

        result: dict[int, FloatArray] = {}
        for leaf in self._leaves:
            if not leaf.requires_grad:
                continue
            grad = grads.get(leaf.id)
            leaf.grad = np.zeros_like(leaf.value) if grad is None else np.array(grad)
            result[leaf.id] = leaf.grad
        _logger.debug(
            "Backward swept %d nodes for %d leaves",
            len(self.nodes),
            len(result),
        )
        return result

    def reset(self) -> None:
        """Forget leaf gradients so backward may run again."""
        for leaf in self._leaves:
            leaf.grad = None
        self._consumed = False


def backward(tape: Tape, loss: Var) -> dict[int, FloatArray]:
    """Run the reverse sweep of ``tape`` from ``loss``."""
    return tape.backward(loss)


def _same_shape(op: str, a: Var, b: Var) -> None:
    if a.shape != b.shape:
        msg = f"{op}: shapes {a.shape} and {b.shape} differ"
        raise DimensionError(msg)


def matmul(a: Var, b: Var) -> Var:
    """Matrix product ``a·b``."""
    if a.cols != b.rows:
        msg = f"matmul: cannot multiply {a.shape} by {b.shape}"
        raise DimensionError(msg)
    av, bv = a.value, b.value
    return a.tape.record(
        "matmul",
        av @ bv,
        (a, b),
        lambda g: (g @ bv.T, av.T @ g),
    )


def spmm(s: CsrSparse, b: Var) -> Var:
    """Sparse-dense product; ``s`` is a constant input."""
    if s.shape[1] != b.rows:
        msg = f"spmm: cannot multiply {s.shape} by {b.shape}"
        raise DimensionError(msg)
    b.tape.sparse_operand(s, name="spmm")
    st = s.T.tocsr()
    return b.tape.record(
        "spmm",
        np.asarray(s @ b.value, dtype=np.float64),
        (b,),
        lambda g: (np.asarray(st @ g, dtype=np.float64),),
    )


def add(a: Var, b: Var) -> Var:
    """Elementwise sum."""
    _same_shape("add", a, b)
    return a.tape.record("add", a.value + b.value, (a, b), lambda g: (g, g))


def sub(a: Var, b: Var) -> Var:
    """Elementwise difference."""
    _same_shape("sub", a, b)
    return a.tape.record("sub", a.value - b.value, (a, b), lambda g: (g, -g))


def scale(a: Var, c: float) -> Var:
    """Multiply by a constant scalar."""
    c = float(c)
    return a.tape.record("scale", c * a.value, (a,), lambda g: (c * g,))


def hadamard(a: Var, b: Var) -> Var:
    """Elementwise product."""
    _same_shape("hadamard", a, b)
    av, bv = a.value, b.value
    return a.tape.record("hadamard", av * bv, (a, b), lambda g: (g * bv, g * av))


def relu(a: Var) -> Var:
    """Rectified linear unit; the active set is a constant mask."""
    mask = a.value > 0
    return a.tape.record(
        "relu",
        np.where(mask, a.value, 0.0),
        (a,),
        lambda g: (g * mask,),
    )


def log(a: Var) -> Var:
    """Elementwise natural logarithm of a strictly positive matrix."""
    av = a.value
    if (av <= 0).any():
        msg = "log: matrix has non-positive entries"
        raise DomainError(msg)
    return a.tape.record("log", np.log(av), (a,), lambda g: (g / av,))


def square(a: Var) -> Var:
    """Elementwise square."""
    av = a.value
    return a.tape.record("square", av * av, (a,), lambda g: (2.0 * av * g,))


def sum_all(a: Var) -> Var:
    """Sum of all entries as a 1x1 value."""
    shape = a.shape
    return a.tape.record(
        "sum",
        np.array([[a.value.sum()]]),
        (a,),
        lambda g: (np.full(shape, g[0, 0]),),
    )


def mean_all(a: Var) -> Var:
    """Mean of all entries as a 1x1 value."""
    shape = a.shape
    size = a.value.size
    return a.tape.record(
        "mean",
        np.array([[a.value.mean()]]),
        (a,),
        lambda g: (np.full(shape, g[0, 0] / size),),
    )


def frobenius_sq(a: Var) -> Var:
    """Squared Frobenius norm ``sum(a_ij^2)``."""
    av = a.value
    return a.tape.record(
        "frobenius_sq",
        np.array([[np.sum(av * av)]]),
        (a,),
        lambda g: (2.0 * g[0, 0] * av,),
    )


def inner(a: Var, c: FloatArray) -> Var:
    """Frobenius inner product with a constant matrix, as a 1x1 value."""
    if c.shape != a.shape:
        msg = f"inner: constant {c.shape} does not match {a.shape}"
        raise DimensionError(msg)
    return a.tape.record(
        "inner",
        np.array([[np.sum(a.value * c)]]),
        (a,),
        lambda g: (g[0, 0] * c,),
    )


def transpose(a: Var) -> Var:
    """Matrix transpose."""
    return a.tape.record("transpose", a.value.T.copy(), (a,), lambda g: (g.T.copy(),))


def take_rows(a: Var, idx: IntArray) -> Var:
    """Gather rows ``idx``; repeated indices accumulate gradient."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= a.rows):
        msg = f"take_rows: index out of range for {a.rows} rows"
        raise DimensionError(msg)
    shape = a.shape

    def _backward(g: FloatArray) -> tuple[FloatArray]:
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return a.tape.record("take_rows", a.value[idx], (a,), _backward)


def mul_row(a: Var, w: Var) -> Var:
    """Multiply every row of ``a`` elementwise by the row vector ``w``."""
    if w.rows != 1 or w.cols != a.cols:
        msg = f"mul_row: weight {w.shape} does not match rows of {a.shape}"
        raise DimensionError(msg)
    av, wv = a.value, w.value
    return a.tape.record(
        "mul_row",
        av * wv,
        (a, w),
        lambda g: (g * wv, np.sum(g * av, axis=0, keepdims=True)),
    )


def scale_rows(a: Var, v: Var) -> Var:
    """Multiply row i of ``a`` by ``v[i, 0]``."""
    if v.cols != 1 or v.rows != a.rows:
        msg = f"scale_rows: scale {v.shape} does not match {a.shape}"
        raise DimensionError(msg)
    av, vv = a.value, v.value
    return a.tape.record(
        "scale_rows",
        av * vv,
        (a, v),
        lambda g: (g * vv, np.sum(g * av, axis=1, keepdims=True)),
    )


def row_sums(a: Var) -> Var:
    """Row sums as a column vector."""
    shape = a.shape
    return a.tape.record(
        "row_sums",
        a.value.sum(axis=1, keepdims=True),
        (a,),
        lambda g: (np.broadcast_to(g, shape).copy(),),
    )


def col_sums(a: Var) -> Var:
    """Column sums as a row vector."""
    shape = a.shape
    return a.tape.record(
        "col_sums",
        a.value.sum(axis=0, keepdims=True),
        (a,),
        lambda g: (np.broadcast_to(g, shape).copy(),),
    )


def mean_rows(a: Var) -> Var:
    """Average of the rows, as a single row."""
    shape = a.shape
    n = a.rows
    return a.tape.record(
        "mean_rows",
        a.value.mean(axis=0, keepdims=True),
        (a,),
        lambda g: (np.broadcast_to(g / n, shape).copy(),),
    )


def reciprocal(a: Var, floor: float = GUARD) -> Var:
    """Elementwise ``1 / max(a, floor)``; clamped entries pass no gradient."""
    clamped = np.maximum(a.value, floor)
    live = a.value > floor
    inv = 1.0 / clamped
    return a.tape.record(
        "reciprocal",
        inv,
        (a,),
        lambda g: (np.where(live, -g * inv * inv, 0.0),),
    )


def apply_mask(a: Var, mask: BoolArray) -> Var:
    """Zero the entries where ``mask`` is false; the mask is constant."""
    if mask.shape != a.shape:
        msg = f"apply_mask: mask {mask.shape} does not match {a.shape}"
        raise DimensionError(msg)
    return a.tape.record(
        "apply_mask",
        np.where(mask, a.value, 0.0),
        (a,),
        lambda g: (np.where(mask, g, 0.0),),
    )


def symmetrize(a: Var) -> Var:
    """Return ``(a + aᵀ) / 2``, which is exactly symmetric."""
    if a.rows != a.cols:
        msg = f"symmetrize: matrix {a.shape} is not square"
        raise DimensionError(msg)
    av = a.value
    return a.tape.record(
        "symmetrize",
        0.5 * (av + av.T),
        (a,),
        lambda g: (0.5 * (g + g.T),),
    )


def gram(u: Var) -> Var:
    """Return ``u·uᵀ`` forced to exact symmetry."""
    uv = u.value
    prod = uv @ uv.T
    return u.tape.record(
        "gram",
        0.5 * (prod + prod.T),
        (u,),
        lambda g: ((g + g.T) @ uv,),
    )


def normalize_rows_l2(a: Var) -> Var:
    """Divide every row by its Euclidean norm."""
    norms = np.sqrt(np.sum(a.value * a.value, axis=1, keepdims=True))
    if (norms == 0).any():
        bad = int(np.flatnonzero(norms[:, 0] == 0)[0])
        msg = f"row {bad} has zero norm"
        raise DegenerateNormError(msg)
    unit = a.value / norms

    def _backward(g: FloatArray) -> tuple[FloatArray]:
        radial = np.sum(g * unit, axis=1, keepdims=True)
        return ((g - unit * radial) / norms,)

    return a.tape.record("normalize_rows_l2", unit, (a,), _backward)


def row_normalize(a: Var, *, safe: bool = True) -> Var:
    """Divide each non-negative row by its sum.

    With ``safe`` a zero-sum row stays zero; otherwise it is an error.
    """
    av = a.value
    if (av < 0).any():
        msg = "row_normalize: matrix has negative entries"
        raise DomainError(msg)
    sums = av.sum(axis=1, keepdims=True)
    empty = sums <= 0
    if empty.any() and not safe:
        bad = int(np.flatnonzero(empty[:, 0])[0])
        msg = f"row {bad} sums to zero"
        raise DegenerateRowError(msg)
    denom = np.where(empty, 1.0, sums)
    out = np.where(empty, 0.0, av / denom)

    def _backward(g: FloatArray) -> tuple[FloatArray]:
        inner = np.sum(g * out, axis=1, keepdims=True)
        return (np.where(empty, 0.0, (g - inner) / denom),)

    return a.tape.record("row_normalize", out, (a,), _backward)


def dropout(
    a: Var,
    rate: float,
    rng: np.random.Generator,
    *,
    training: bool,
) -> Var:
    """Inverted dropout; identity outside training or at rate 0."""
    if not 0.0 <= rate < 1.0:
        msg = f"dropout rate must be in [0, 1), got {rate}"
        raise DomainError(msg)
    if not training or rate == 0.0:
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return a.tape.record("dropout", a.value * keep, (a,), lambda g: (g * keep,))


def softmax_cross_entropy(logits: Var, labels: IntArray, mask: IntArray) -> Var:
    """Mean negative log-likelihood of ``labels`` over the rows in ``mask``."""
    mask = np.asarray(mask, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if mask.size == 0:
        msg = "softmax_cross_entropy: empty mask"
        raise InvalidMaskError(msg)
    if mask.min() < 0 or mask.max() >= logits.rows:
        msg = "softmax_cross_entropy: mask index out of range"
        raise InvalidMaskError(msg)
    if np.unique(mask).size != mask.size:
        msg = "softmax_cross_entropy: mask has repeated nodes"
        raise InvalidMaskError(msg)
    targets = labels[mask]
    n_classes = logits.cols
    if targets.min() < 0 or targets.max() >= n_classes:
        msg = f"labels must lie in [0, {n_classes})"
        raise DomainError(msg)

    picked = logits.value[mask]
    shifted = picked - picked.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_prob = shifted - log_norm
    rows = np.arange(mask.size)
    loss = -log_prob[rows, targets].mean()
    probs = np.exp(log_prob)
    shape = logits.shape

    def _backward(g: FloatArray) -> tuple[FloatArray]:
        local = probs.copy()
        local[rows, targets] -= 1.0
        out = np.zeros(shape)
        out[mask] = local * (g[0, 0] / mask.size)
        return (out,)

    return logits.tape.record(
        "softmax_cross_entropy",
        np.array([[loss]]),
        (logits,),
        _backward,
    )


def softmax(values: FloatArray) -> FloatArray:
    """Row-wise softmax of plain values."""
    shifted = values - values.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def numeric_gradient(
    fn: Callable[[FloatArray], float],
    x: FloatArray,
    h: float = 1e-5,
) -> FloatArray:
    """Central finite-difference gradient of scalar ``fn`` at ``x``."""
    grad = np.zeros_like(x)
    shifted = np.array(x, dtype=np.float64)
    for index in np.ndindex(*x.shape):
        original = shifted[index]
        shifted[index] = original + h
        upper = fn(shifted)
        shifted[index] = original - h
        lower = fn(shifted)
        shifted[index] = original
        grad[index] = (upper - lower) / (2.0 * h)
    return grad


def relative_error(analytic: FloatArray, numeric: FloatArray) -> float:
    """Largest absolute deviation scaled by the larger gradient magnitude."""
    scale_ = max(float(np.abs(analytic).max(initial=0.0)), float(np.abs(numeric).max(initial=0.0)))
    if scale_ == 0.0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / scale_)


__all__ = [
    "Node",
    "Tape",
    "Var",
    "add",
    "apply_mask",
    "as_dense",
    "backward",
    "col_sums",
    "dropout",
    "frobenius_sq",
    "gram",
    "hadamard",
    "inner",
    "log",
    "matmul",
    "mean_all",
    "mean_rows",
    "mul_row",
    "normalize_rows_l2",
    "numeric_gradient",
    "reciprocal",
    "relative_error",
    "relu",
    "row_normalize",
    "row_sums",
    "scale",
    "scale_rows",
    "softmax",
    "softmax_cross_entropy",
    "spmm",
    "square",
    "sub",
    "sum_all",
    "symmetrize",
    "take_rows",
    "transpose",
]
