"""Graph learning: weighted cosine metric, sparsification, anchors and mixing."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import scipy.sparse as sp

from itergraph.autodiff import (
    Tape,
    Var,
    add,
    apply_mask,
    col_sums,
    row_normalize,
    row_sums,
    scale,
)
from itergraph.errors import (
    DegenerateNormError,
    DimensionError,
    DomainError,
    IsolatedAnchorError,
)

if TYPE_CHECKING:  # pragma: no cover
    from numpy.typing import ArrayLike

    from itergraph.types import CsrSparse, FloatArray, IntArray

_logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricHeads:
    """The m weight vectors of the multi-head cosine, one per row."""

    w: Var

    def __post_init__(self) -> None:
        """Reject an empty head set."""
        if self.w.rows < 1:
            msg = "a metric needs at least one head"
            raise DomainError(msg)

    @property
    def m(self) -> int:
        """Return the number of heads."""
        return self.w.rows

    @property
    def dim(self) -> int:
        """Return the dimension each head weights."""
        return self.w.cols


@dataclass(frozen=True)
class LearnedGraph:
    """Similarity and its ε-neighbourhood adjacency."""

    s: Var
    a: Var

    @property
    def nnz(self) -> int:
        """Return the number of surviving entries."""
        return int(np.count_nonzero(self.a.value))


@dataclass(frozen=True)
class AnchorAffinity:
    """Node-anchor affinities with their row and column sums."""

    r: Var
    delta: Var
    lambda_: Var
    anchor_idx: IntArray

    @classmethod
    def from_var(cls, r: Var, anchor_idx: ArrayLike | None = None) -> AnchorAffinity:
        """Derive both normalizers from ``r`` on its own tape."""
        idx = np.arange(r.cols) if anchor_idx is None else np.asarray(anchor_idx, dtype=np.int64)
        if idx.size != r.cols:
            msg = f"{idx.size} anchor indices given for {r.cols} anchor columns"
            raise DimensionError(msg)
        return cls(r=r, delta=row_sums(r), lambda_=col_sums(r), anchor_idx=idx)

    @classmethod
    def from_array(
        cls,
        r: ArrayLike,
        *,
        tape: Tape | None = None,
        anchor_idx: ArrayLike | None = None,
    ) -> AnchorAffinity:
        """Wrap a plain non-negative affinity matrix as a constant."""
        tape = tape or Tape()
        r_var = tape.constant(r, name="r")
        if (r_var.value < 0).any():
            msg = "affinities must be non-negative"
            raise DomainError(msg)
        return cls.from_var(r_var, anchor_idx)

    @property
    def n(self) -> int:
        """Return the node count."""
        return self.r.rows

    @property
    def s(self) -> int:
        """Return the anchor count."""
        return self.r.cols


def _weighted_units(
    v: FloatArray,
    w: FloatArray,
    *,
    strict: bool,
) -> list[tuple[FloatArray, FloatArray]]:
    """Unit rows and norms per head; without ``strict`` zero rows stay zero."""
    units = []
    for p in range(w.shape[0]):
        weighted = v * w[p]
        norms = np.sqrt(np.sum(weighted * weighted, axis=1, keepdims=True))
        dead = norms == 0
        if dead.any():
            bad = int(np.flatnonzero(dead[:, 0])[0])
            if strict:
                msg = f"head {p}: weighted row {bad} has zero norm"
                raise DegenerateNormError(msg)
            _logger.debug("head %d: %d zero rows get zero similarity", p, int(dead.sum()))
            norms = np.where(dead, np.inf, norms)
        units.append((weighted / norms, norms))
    return units


def _head_cosine(
    v: Var,
    heads: MetricHeads,
    anchor_idx: IntArray | None,
    *,
    strict: bool = True,
) -> Var:
    """Average weighted cosine between rows of ``v`` and the anchor rows.

    Without anchors every row is compared with every row and the result is
    made exactly symmetric. Only per-head unit rows are kept for the
    backward pass.
    """
    if heads.dim != v.cols:
        msg = f"heads weight {heads.dim} dims but input rows have {v.cols}"
        raise DimensionError(msg)
    vv, wv = v.value, heads.w.value
    m = heads.m
    units = _weighted_units(vv, wv, strict=strict)

    if anchor_idx is None:
        acc = sum(u @ u.T for u, _ in units)
        out = 0.5 * (acc + acc.T) / m
    else:
        out = sum(u @ u[anchor_idx].T for u, _ in units) / m

    def _backward(g: FloatArray) -> tuple[FloatArray, FloatArray]:
        grad_v = np.zeros_like(vv)
        grad_w = np.zeros_like(wv)
        for p, (u, norms) in enumerate(units):
            if anchor_idx is None:
                du = (g + g.T) @ u / m
            else:
                du = g @ u[anchor_idx] / m
                np.add.at(du, anchor_idx, g.T @ u / m)
            radial = np.sum(du * u, axis=1, keepdims=True)
            dx = (du - u * radial) / norms
            grad_v += dx * wv[p]
            grad_w[p] = np.sum(dx * vv, axis=0)
        return grad_v, grad_w

    op = "multihead_cosine" if anchor_idx is None else "anchor_cosine"
    return v.tape.record(op, out, (v, heads.w), _backward)


def multihead_cosine(v: Var, heads: MetricHeads, *, strict: bool = True) -> Var:
    """Mean over heads of the cosine between ``w_p ⊙ v_i`` and ``w_p ⊙ v_j``.

    With ``strict`` a row with zero weighted norm is an error, otherwise its
    similarities are zero and it passes no gradient.
    """
    return _head_cosine(v, heads, None, strict=strict)


def epsilon_sparsify(s: Var, eps: float) -> Var:
    """Zero every entry below ``eps``; the kept set is a constant mask."""
    if eps < 0:
        msg = f"eps must be non-negative, got {eps}"
        raise DomainError(msg)
    return apply_mask(s, s.value >= eps)


def learn_graph(v: Var, heads: MetricHeads, eps: float, *, strict: bool = True) -> LearnedGraph:
    """Similarity followed by ε-neighbourhood sparsification."""
    s = multihead_cosine(v, heads, strict=strict)
    return LearnedGraph(s=s, a=epsilon_sparsify(s, eps))


def sample_anchors(n: int, s: int, rng: np.random.Generator) -> IntArray:
    """Draw ``s`` distinct node indices uniformly, returned in ascending order."""
    if not 1 <= s <= n:
        msg = f"anchor count must satisfy 1 <= s <= n, got s={s} for n={n}"
        raise DomainError(msg)
    if s == n:
        return np.arange(n, dtype=np.int64)
    return np.sort(rng.choice(n, size=s, replace=False)).astype(np.int64)


def anchor_affinity(
    v: Var,
    anchor_idx: ArrayLike,
    heads: MetricHeads,
    eps: float,
    *,
    strict: bool = True,
) -> AnchorAffinity:
    """Weighted cosine between every node and every anchor, ε-masked.

    The anchors are the rows ``anchor_idx`` of ``v``. With ``strict`` an
    anchor left without any affinity, or a zero weighted row, is an error.
    """
    idx = np.asarray(anchor_idx, dtype=np.int64)
    if idx.size < 1:
        msg = "at least one anchor is required"
        raise DomainError(msg)
    if idx.min() < 0 or idx.max() >= v.rows:
        msg = f"anchor index out of range for {v.rows} nodes"
        raise DimensionError(msg)
    r = epsilon_sparsify(_head_cosine(v, heads, idx, strict=strict), eps)
    aff = AnchorAffinity.from_var(r, idx)
    isolated = np.flatnonzero(aff.lambda_.value[0] <= 0)
    if isolated.size:
        if strict:
            msg = f"anchors {isolated.tolist()} have no affinity left after masking"
            raise IsolatedAnchorError(msg)
        _logger.debug("%d isolated anchors after masking", isolated.size)
    return aff


def combine_graphs(
    l0: CsrSparse | FloatArray | Var,
    a_t: Var,
    a_1: Var,
    lambda_: float,
    eta: float,
    *,
    a_1_normalized: Var | None = None,
) -> Var:
    """Mix the initial graph with the row-normalized learned graphs.

    ``λ·L0 + (1-λ)·[η·rownorm(a_t) + (1-η)·rownorm(a_1)]``. A caller that
    already row-normalized ``a_1`` may pass it as ``a_1_normalized``.
    """
    if not 0.0 <= lambda_ <= 1.0 or not 0.0 <= eta <= 1.0:
        msg = f"mixing weights must lie in [0, 1], got lambda={lambda_} eta={eta}"
        raise DomainError(msg)
    tape = a_t.tape
    if isinstance(l0, Var):
        l0_var = l0
    elif sp.issparse(l0):
        l0_var = tape.constant(l0.toarray(), name="l0")
    else:
        l0_var = tape.constant(l0, name="l0")
    if not l0_var.shape == a_t.shape == a_1.shape:
        msg = f"graph shapes differ: l0 {l0_var.shape}, a_t {a_t.shape}, a_1 {a_1.shape}"
        raise DimensionError(msg)

    rn_1 = a_1_normalized if a_1_normalized is not None else row_normalize(a_1)
    learned = add(scale(row_normalize(a_t), eta), scale(rn_1, 1.0 - eta))
    return add(scale(l0_var, lambda_), scale(learned, 1.0 - lambda_))


__all__ = [
    "AnchorAffinity",
    "LearnedGraph",
    "MetricHeads",
    "anchor_affinity",
    "combine_graphs",
    "epsilon_sparsify",
    "learn_graph",
    "multihead_cosine",
    "sample_anchors",
]
