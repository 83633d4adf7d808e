"""Initial graph construction, normalization and edge perturbation."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import scipy.sparse as sp
from sklearn.metrics.pairwise import cosine_similarity

from itergraph.constants import STREAMING_PERTURB_NODES
from itergraph.errors import (
    ConfigError,
    DatasetError,
    DegenerateFeatureError,
    DimensionError,
    DomainError,
    NonFiniteError,
    SymmetryError,
)

if TYPE_CHECKING:  # pragma: no cover
    from pathlib import Path

    from itergraph.loaders import GraphDataset
    from itergraph.types import AttackMode, CsrSparse, FloatArray

_logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InitialGraph:
    """Initial adjacency and its normalized form used for message passing."""

    a0: CsrSparse
    l0_sym: CsrSparse

    @property
    def n(self) -> int:
        """Return the node count."""
        return int(self.a0.shape[0])


def validate_csr(s: CsrSparse, *, name: str = "matrix") -> None:
    """Check the structural invariants of a CSR matrix."""
    rows, cols = s.shape
    indptr = s.indptr
    if indptr.size != rows + 1 or (np.diff(indptr) < 0).any():
        msg = f"{name}: row pointer is not monotone of length rows+1"
        raise DimensionError(msg)
    if s.indices.size and (s.indices.min() < 0 or s.indices.max() >= cols):
        msg = f"{name}: column index out of range"
        raise DimensionError(msg)
    if not s.has_canonical_format:
        merged = s.copy()
        merged.sum_duplicates()
        if merged.nnz != s.nnz:
            msg = f"{name}: duplicate (row, col) entries"
            raise DimensionError(msg)
    if not np.isfinite(s.data).all():
        msg = f"{name}: non-finite values"
        raise NonFiniteError(msg)


def densify(s: CsrSparse) -> FloatArray:
    """Return a dense float64 copy."""
    return np.asarray(s.toarray(), dtype=np.float64)


def is_symmetric(s: CsrSparse) -> bool:
    """Return True when ``s`` equals its transpose exactly."""
    if s.shape[0] != s.shape[1]:
        return False
    return (s != s.T).nnz == 0


def knn_graph(x: FloatArray, k: int) -> CsrSparse:
    """Binary kNN graph by cosine similarity, symmetrized by union.

    Ties are broken in favour of the lower node index.
    """
    n = x.shape[0]
    if not 1 <= k < n:
        msg = f"k must satisfy 1 <= k < n, got k={k} for n={n}"
        raise DomainError(msg)
    norms = np.linalg.norm(x, axis=1)
    if (norms == 0).any():
        bad = int(np.flatnonzero(norms == 0)[0])
        msg = f"feature row {bad} has zero norm, cosine kNN is undefined"
        raise DegenerateFeatureError(msg)

    sim = cosine_similarity(x)
    np.fill_diagonal(sim, -np.inf)
    order = np.arange(n)
    rows = np.repeat(order, k)
    cols = np.empty(n * k, dtype=np.int64)
    for i in range(n):
        ranked = np.lexsort((order, -sim[i]))
        cols[i * k : (i + 1) * k] = ranked[:k]

    directed = sp.csr_matrix((np.ones(n * k), (rows, cols)), shape=(n, n))
    union = ((directed + directed.T) > 0).astype(np.float64).tocsr()
    union.sort_indices()
    _logger.debug("Built %d-NN graph with %d undirected edges", k, union.nnz // 2)
    return union


def sym_normalize(a0: CsrSparse, *, add_self_loops: bool = True) -> CsrSparse:
    """Return ``D^-1/2 Â D^-1/2`` with ``Â = a0 + I`` when self-loops are on."""
    if a0.shape[0] != a0.shape[1]:
        msg = f"adjacency must be square, got {a0.shape}"
        raise DimensionError(msg)
    if not is_symmetric(a0):
        msg = "adjacency is not symmetric"
        raise SymmetryError(msg)
    if (a0.data < 0).any():
        msg = "adjacency has negative weights"
        raise DomainError(msg)

    a_hat = a0.tocsr().astype(np.float64)
    if add_self_loops:
        a_hat = (a_hat + sp.identity(a0.shape[0], format="csr")).tocsr()
    degree = np.asarray(a_hat.sum(axis=1)).ravel()
    inv_sqrt = np.zeros_like(degree)
    positive = degree > 0
    inv_sqrt[positive] = 1.0 / np.sqrt(degree[positive])

    coo = a_hat.tocoo()
    # multiply the two degree factors first so (i, j) and (j, i) round identically
    vals = coo.data * (inv_sqrt[coo.row] * inv_sqrt[coo.col])
    out = sp.csr_matrix((vals, (coo.row, coo.col)), shape=a_hat.shape)
    out.sort_indices()
    return out


def prepare_graph(dataset: GraphDataset, k: int | None) -> InitialGraph:
    """Use the dataset adjacency, or a kNN graph of its features."""
    if dataset.a0 is not None:
        a0 = dataset.a0
    elif k is None:
        msg = "dataset has no initial adjacency and no k was given for the kNN graph"
        raise ConfigError(msg)
    else:
        a0 = knn_graph(dataset.x, k)
    return InitialGraph(a0=a0, l0_sym=sym_normalize(a0))


def _upper_edges(a0: CsrSparse) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    coo = sp.triu(a0, k=1).tocoo()
    return coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data


def _symmetric_from_upper(
    rows: np.ndarray,
    cols: np.ndarray,
    vals: np.ndarray,
    diag: np.ndarray,
    n: int,
) -> CsrSparse:
    upper = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    out = (upper + upper.T + sp.diags(diag, format="csr")).tocsr()
    out.eliminate_zeros()
    out.sort_indices()
    return out


def perturb_edges(
    a0: CsrSparse,
    p: float,
    mode: AttackMode,
    seed: int,
) -> CsrSparse:
    """Randomly delete existing or add absent undirected edges with probability p."""
    if not 0.0 <= p <= 1.0:
        msg = f"perturbation probability must be in [0, 1], got {p}"
        raise DomainError(msg)
    if not is_symmetric(a0):
        msg = "adjacency is not symmetric"
        raise SymmetryError(msg)
    n = a0.shape[0]
    rng = np.random.default_rng(seed)
    rows, cols, vals = _upper_edges(a0)
    diag = a0.diagonal()

    if mode == "delete":
        keep = rng.random(rows.size) >= p
        _logger.info("Deleted %d of %d edges (p=%s)", int((~keep).sum()), rows.size, p)
        return _symmetric_from_upper(rows[keep], cols[keep], vals[keep], diag, n)
    if mode != "add":
        msg = f"unknown perturbation mode {mode!r}"
        raise ConfigError(msg)

    existing = set(zip(rows.tolist(), cols.tolist(), strict=True))
    new_rows: list[np.ndarray] = []
    new_cols: list[np.ndarray] = []
    if n <= STREAMING_PERTURB_NODES:
        cand_r, cand_c = np.triu_indices(n, k=1)
        hit = rng.random(cand_r.size) < p
        new_rows.append(cand_r[hit])
        new_cols.append(cand_c[hit])
    else:
        for i in range(n - 1):
            hit = np.flatnonzero(rng.random(n - i - 1) < p) + i + 1
            new_rows.append(np.full(hit.size, i, dtype=np.int64))
            new_cols.append(hit)
    add_r = np.concatenate(new_rows) if new_rows else np.empty(0, dtype=np.int64)
    add_c = np.concatenate(new_cols) if new_cols else np.empty(0, dtype=np.int64)
    fresh = np.array(
        [(r, c) not in existing for r, c in zip(add_r.tolist(), add_c.tolist(), strict=True)],
        dtype=bool,
    )
    add_r, add_c = add_r[fresh], add_c[fresh]
    _logger.info("Added %d edges to %d existing (p=%s)", add_r.size, rows.size, p)
    return _symmetric_from_upper(
        np.concatenate([rows, add_r]),
        np.concatenate([cols, add_c]),
        np.concatenate([vals, np.ones(add_r.size)]),
        diag,
        n,
    )


def read_edge_list(path: Path, n: int | None = None) -> CsrSparse:
    """Read ``src dst [weight]`` lines into a symmetric adjacency.

    Node ids are 0-indexed; each undirected edge is listed once.
    """
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    with path.open(encoding="utf-8") as content:
        for lineno, raw in enumerate(content, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) not in {2, 3}:
                msg = f"{path}:{lineno}: expected 'src dst [weight]', got {raw.strip()!r}"
                raise DatasetError(msg)
            try:
                src, dst = int(fields[0]), int(fields[1])
                weight = float(fields[2]) if len(fields) == 3 else 1.0  # noqa: PLR2004
            except ValueError as exc:
                msg = f"{path}:{lineno}: non-numeric field in {raw.strip()!r}"
                raise DatasetError(msg) from exc
            rows.append(src)
            cols.append(dst)
            vals.append(weight)

    size = n if n is not None else (max(max(rows), max(cols)) + 1 if rows else 0)
    ids = np.array(rows + cols, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= size):
        bad = int(ids[(ids < 0) | (ids >= size)][0])
        msg = f"{path}: node id {bad} is outside 0..{size - 1}"
        raise DatasetError(msg)

    # a repeated listing of an edge overrides the earlier weight
    edges: dict[tuple[int, int], float] = {}
    for src, dst, weight in zip(rows, cols, vals, strict=True):
        edges[min(src, dst), max(src, dst)] = weight
    if not edges:
        return sp.csr_matrix((size, size), dtype=np.float64)
    keys = np.array(list(edges), dtype=np.int64)
    weights = np.fromiter(edges.values(), dtype=np.float64, count=len(edges))
    strict_mask = keys[:, 0] != keys[:, 1]
    diag = np.zeros(size)
    diag[keys[~strict_mask, 0]] = weights[~strict_mask]
    return _symmetric_from_upper(
        keys[strict_mask, 0],
        keys[strict_mask, 1],
        weights[strict_mask],
        diag,
        size,
    )


def write_edge_list(path: Path, a: CsrSparse | FloatArray) -> int:
    """Write the upper triangle of a symmetric adjacency; returns edge count."""
    coo = sp.triu(sp.csr_matrix(a)).tocoo()
    order = np.lexsort((coo.col, coo.row))
    with path.open("w", encoding="utf-8") as out:
        for i in order:
            out.write(f"{coo.row[i]} {coo.col[i]} {coo.data[i]:.17g}\n")
    return int(coo.nnz)


def write_bipartite_edge_list(
    path: Path,
    r: FloatArray,
    anchor_idx: np.ndarray,
) -> int:
    """Write node-anchor affinities as ``node anchor_node weight`` lines."""
    rows, cols = np.nonzero(r)
    with path.open("w", encoding="utf-8") as out:
        for i, k in zip(rows.tolist(), cols.tolist(), strict=True):
            out.write(f"{i} {int(anchor_idx[k])} {r[i, k]:.17g}\n")
    return int(rows.size)


__all__ = [
    "InitialGraph",
    "densify",
    "is_symmetric",
    "knn_graph",
    "perturb_edges",
    "prepare_graph",
    "read_edge_list",
    "sym_normalize",
    "validate_csr",
    "write_bipartite_edge_list",
    "write_edge_list",
]
