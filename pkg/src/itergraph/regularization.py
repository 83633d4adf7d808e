"""Graph regularization: smoothness, connectivity and sparsity."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from itergraph.autodiff import (
    add,
    frobenius_sq,
    inner,
    log,
    matmul,
    reciprocal,
    row_sums,
    scale,
    scale_rows,
    sum_all,
    symmetrize,
    transpose,
)
from itergraph.constants import GUARD
from itergraph.errors import BarrierDomainError, DimensionError, DomainError, SymmetryError

if TYPE_CHECKING:  # pragma: no cover
    from itergraph.autodiff import Var
    from itergraph.learner import AnchorAffinity
    from itergraph.types import FloatArray

_logger = logging.getLogger(__name__)

# relative tolerance for the symmetry precondition of the smoothness term
SYMMETRY_TOL = 1e-10


@dataclass(frozen=True)
class RegWeights:
    """Weights of the smoothness, connectivity and sparsity terms."""

    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self) -> None:
        """Reject negative weights."""
        for name in ("alpha", "beta", "gamma"):
            if getattr(self, name) < 0:
                msg = f"regularization weight {name} must be non-negative"
                raise DomainError(msg)

    @property
    def is_zero(self) -> bool:
        """Return True when every term is switched off."""
        return self.alpha == self.beta == self.gamma == 0.0


def pairwise_sq_dists(x: FloatArray) -> FloatArray:
    """Squared Euclidean distances between all rows of ``x``."""
    sq = np.sum(x * x, axis=1)
    dists = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    dists = np.maximum(0.5 * (dists + dists.T), 0.0)
    np.fill_diagonal(dists, 0.0)
    return dists


def _zero(a: Var) -> Var:
    return a.tape.constant(np.zeros((1, 1)))


def dirichlet_energy(a: Var, x: FloatArray, dists: FloatArray | None = None) -> Var:
    """``tr(XᵀLX)/n²`` written as ``Σ A_ij‖x_i - x_j‖² / (2n²)``.

    ``dists`` may carry precomputed :func:`pairwise_sq_dists` of ``x``.
    """
    n = a.rows
    if a.cols != n or x.shape[0] != n:
        msg = f"dirichlet_energy: adjacency {a.shape} does not match features {x.shape}"
        raise DimensionError(msg)
    av = a.value
    if np.abs(av - av.T).max(initial=0.0) > SYMMETRY_TOL * max(1.0, np.abs(av).max(initial=0.0)):
        msg = "smoothness needs a symmetric adjacency"
        raise SymmetryError(msg)
    if dists is None:
        dists = pairwise_sq_dists(x)
    return scale(inner(a, dists), 1.0 / (2.0 * n * n))


def connectivity_sparsity(a: Var, beta: float, gamma: float, *, strict: bool = True) -> Var:
    """``-(β/n)·1ᵀlog(A1) + (γ/n²)·‖A‖²``.

    With ``strict`` a zero-degree node under ``β > 0`` is an error,
    otherwise ``GUARD`` is added to every degree.
    """
    n = a.rows
    loss = _zero(a)
    if beta > 0:
        degree = row_sums(a)
        if strict:
            if (degree.value <= 0).any():
                bad = int(np.flatnonzero(degree.value[:, 0] <= 0)[0])
                msg = f"node {bad} has zero degree, the log barrier is undefined"
                raise BarrierDomainError(msg)
        else:
            degree = add(degree, degree.tape.constant(np.full(degree.shape, GUARD)))
        loss = add(loss, scale(sum_all(log(degree)), -beta / n))
    if gamma > 0:
        loss = add(loss, scale(frobenius_sq(a), gamma / (n * n)))
    return loss


def graph_reg_loss(
    a: Var,
    x: FloatArray,
    rw: RegWeights,
    *,
    dists: FloatArray | None = None,
    strict: bool = True,
) -> Var:
    """``α·dirichlet_energy + connectivity_sparsity``."""
    loss = connectivity_sparsity(a, rw.beta, rw.gamma, strict=strict)
    if rw.alpha > 0:
        loss = add(scale(dirichlet_energy(a, x, dists), rw.alpha), loss)
    return loss


def anchor_graph(aff: AnchorAffinity) -> Var:
    """Unnormalized anchor graph ``RᵀΔ⁻¹R``, exactly symmetric."""
    return symmetrize(matmul(transpose(aff.r), scale_rows(aff.r, reciprocal(aff.delta))))


def anchor_reg_loss(
    aff: AnchorAffinity,
    x_anchor: FloatArray,
    rw: RegWeights,
    *,
    dists: FloatArray | None = None,
    strict: bool = True,
) -> Var:
    """Graph regularization applied to the anchor graph; sizes use s."""
    if x_anchor.shape[0] != aff.s:
        msg = f"{x_anchor.shape[0]} anchor feature rows for {aff.s} anchors"
        raise DimensionError(msg)
    if rw.beta > 0 and aff.s < 2:  # noqa: PLR2004
        msg = "the connectivity term needs at least two anchors"
        raise DomainError(msg)
    if rw.is_zero:
        return _zero(aff.r)
    return graph_reg_loss(anchor_graph(aff), x_anchor, rw, dists=dists, strict=strict)


__all__ = [
    "RegWeights",
    "anchor_graph",
    "anchor_reg_loss",
    "connectivity_sparsity",
    "dirichlet_energy",
    "graph_reg_loss",
    "pairwise_sq_dists",
]
