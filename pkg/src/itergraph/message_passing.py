"""GCN layers and node-anchor message passing."""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass
from typing import TYPE_CHECKING, Literal

import numpy as np
import scipy.sparse as sp

from itergraph.autodiff import (
    Var,
    add,
    dropout,
    matmul,
    reciprocal,
    relu,
    scale,
    scale_rows,
    spmm,
    transpose,
)
from itergraph.constants import ORACLE_MAX_NODES
from itergraph.errors import DimensionError, DomainError, OracleScaleError

if TYPE_CHECKING:  # pragma: no cover
    from itergraph.learner import AnchorAffinity
    from itergraph.types import CsrSparse, FloatArray

_logger = logging.getLogger(__name__)

Propagator = Var | sp.csr_matrix | Callable[[Var], Var]
Activation = Literal["relu", "none"]


@dataclass(frozen=True)
class GcnWeights:
    """Weights of the two GCN layers."""

    w1: Var
    w2: Var

    def __post_init__(self) -> None:
        """Check that the layers compose."""
        if self.w1.cols != self.w2.rows:
            msg = f"layer shapes {self.w1.shape} and {self.w2.shape} do not compose"
            raise DimensionError(msg)


def propagate(f: Var, adj: Propagator) -> Var:
    """Return ``adj·f`` for a dense, sparse or functional adjacency."""
    if isinstance(adj, Var):
        return matmul(adj, f)
    if sp.issparse(adj):
        return spmm(adj.tocsr(), f)
    return adj(f)


def gcn_layer(  # noqa: PLR0913
    f: Var,
    adj: Propagator,
    w: Var,
    activation: Activation = "relu",
    *,
    rate: float = 0.0,
    rng: np.random.Generator | None = None,
    training: bool = False,
) -> Var:
    """``activation(adj·f·w)`` followed by dropout while training."""
    if f.cols != w.rows:
        msg = f"gcn_layer: features {f.shape} do not match weights {w.shape}"
        raise DimensionError(msg)
    out = matmul(propagate(f, adj), w)
    if activation == "relu":
        out = relu(out)
    elif activation != "none":
        msg = f"unknown activation {activation!r}"
        raise DomainError(msg)
    if training and rate > 0.0:
        if rng is None:
            msg = "dropout while training needs a random generator"
            raise DomainError(msg)
        out = dropout(out, rate, rng, training=training)
    return out


def gcn_forward(  # noqa: PLR0913
    x: Var,
    adj: Propagator,
    gcn: GcnWeights,
    *,
    rate: float = 0.0,
    rng: np.random.Generator | None = None,
    training: bool = False,
) -> tuple[Var, Var]:
    """Two-layer GCN; returns the hidden embeddings and the logits."""
    z = gcn_layer(x, adj, gcn.w1, "relu", rate=rate, rng=rng, training=training)
    logits = gcn_layer(z, adj, gcn.w2, "none")
    return z, logits


def mp12(f: Var, aff: AnchorAffinity) -> Var:
    """Node-to-anchor then anchor-to-node passing, ``Δ⁻¹R(Λ⁻¹Rᵀf)``.

    Only n×dim and s×dim intermediates are formed.
    """
    if f.rows != aff.n:
        msg = f"mp12: {f.rows} feature rows for {aff.n} nodes"
        raise DimensionError(msg)
    to_anchors = scale_rows(matmul(transpose(aff.r), f), reciprocal(transpose(aff.lambda_)))
    return scale_rows(matmul(aff.r, to_anchors), reciprocal(aff.delta))


def _safe_inverse(values: FloatArray) -> FloatArray:
    out = np.zeros_like(values)
    positive = values > 0
    out[positive] = 1.0 / values[positive]
    return out


def recover_node_adjacency(aff: AnchorAffinity) -> FloatArray:
    """Two-step node transition matrix ``Δ⁻¹RΛ⁻¹Rᵀ`` (small graphs only)."""
    if aff.n > ORACLE_MAX_NODES:
        msg = f"node recovery materializes {aff.n}x{aff.n}, limit is {ORACLE_MAX_NODES} nodes"
        raise OracleScaleError(msg)
    r = aff.r.value
    inv_delta = _safe_inverse(r.sum(axis=1))
    inv_lambda = _safe_inverse(r.sum(axis=0))
    return (inv_delta[:, None] * r) @ (inv_lambda[:, None] * r.T)


def recover_anchor_adjacency(aff: AnchorAffinity) -> FloatArray:
    """Two-step anchor transition matrix ``Λ⁻¹RᵀΔ⁻¹R``."""
    r = aff.r.value
    inv_delta = _safe_inverse(r.sum(axis=1))
    inv_lambda = _safe_inverse(r.sum(axis=0))
    return (inv_lambda[:, None] * r.T) @ (inv_delta[:, None] * r)


def hybrid_mp(  # noqa: PLR0913
    f: Var,
    l0: CsrSparse,
    r_t: AnchorAffinity,
    r_1: AnchorAffinity,
    lambda_: float,
    eta: float,
) -> Var:
    """``λ·L0·f + (1-λ)·[η·mp12(f, R_t) + (1-η)·mp12(f, R_1)]``."""
    if not 0.0 <= lambda_ <= 1.0 or not 0.0 <= eta <= 1.0:
        msg = f"mixing weights must lie in [0, 1], got lambda={lambda_} eta={eta}"
        raise DomainError(msg)
    if r_t.r is r_1.r:
        learned = mp12(f, r_t)
    else:
        learned = add(scale(mp12(f, r_t), eta), scale(mp12(f, r_1), 1.0 - eta))
    return add(scale(spmm(l0, f), lambda_), scale(learned, 1.0 - lambda_))


__all__ = [
    "GcnWeights",
    "Propagator",
    "gcn_forward",
    "gcn_layer",
    "hybrid_mp",
    "mp12",
    "propagate",
    "recover_anchor_adjacency",
    "recover_node_adjacency",
]
