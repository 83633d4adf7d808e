"""Tests for itergraph.graph."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
import pytest
import scipy.sparse as sp

from itergraph.benchmarks import ring_adjacency
from itergraph.errors import (
    ConfigError,
    DatasetError,
    DegenerateFeatureError,
    DimensionError,
    DomainError,
    SymmetryError,
)
from itergraph.graph import (
    densify,
    is_symmetric,
    knn_graph,
    perturb_edges,
    prepare_graph,
    read_edge_list,
    sym_normalize,
    validate_csr,
    write_bipartite_edge_list,
    write_edge_list,
)

if TYPE_CHECKING:
    from pathlib import Path

    from itergraph.loaders import GraphDataset


def test_knn_graph_pairs() -> None:
    """Two tight pairs link only within themselves."""
    x = np.array([[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.1, 0.9]])
    a = densify(knn_graph(x, 1))
    expected = np.array(
        [[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]],
        dtype=np.float64,
    )
    np.testing.assert_array_equal(a, expected)


def test_knn_graph_ties_prefer_lower_index() -> None:
    """Identical rows tie; the lower index wins and the union symmetrizes."""
    a = densify(knn_graph(np.ones((3, 2)), 1))
    expected = np.array([[0, 1, 1], [1, 0, 0], [1, 0, 0]], dtype=np.float64)
    np.testing.assert_array_equal(a, expected)


def test_knn_graph_properties(rng: np.random.Generator) -> None:
    """Binary, symmetric, no self-loops, every node has at least k neighbours."""
    a = knn_graph(rng.standard_normal((30, 4)), 3)
    assert is_symmetric(a)
    assert set(np.unique(a.data)) == {1.0}
    assert a.diagonal().sum() == 0
    assert (np.diff(a.indptr) >= 3).all()


@pytest.mark.parametrize("k", (0, 4), ids=("zero", "n"))
def test_knn_graph_bad_k(k: int) -> None:
    """k must lie in [1, n)."""
    with pytest.raises(DomainError):
        knn_graph(np.eye(4) + 0.1, k)


def test_knn_graph_zero_row() -> None:
    """Cosine is undefined for a zero feature row."""
    with pytest.raises(DegenerateFeatureError, match="row 1"):
        knn_graph(np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]]), 1)


def test_sym_normalize_single_edge() -> None:
    """One edge plus self-loops gives a uniform 2x2 matrix of one half."""
    a0 = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(densify(sym_normalize(a0)), np.full((2, 2), 0.5))


def test_sym_normalize_single_node() -> None:
    """An isolated node with its self-loop normalizes to one."""
    np.testing.assert_array_equal(densify(sym_normalize(sp.csr_matrix((1, 1)))), [[1.0]])


def test_sym_normalize_path_graph() -> None:
    """Path 0-1-2 with self-loops has degrees 2, 3, 2."""
    a0 = sp.csr_matrix(np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]]))
    off = 1.0 / np.sqrt(6.0)
    expected = np.array([[0.5, off, 0.0], [off, 1.0 / 3.0, off], [0.0, off, 0.5]])
    np.testing.assert_allclose(densify(sym_normalize(a0)), expected, rtol=0, atol=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_sym_normalize_spectrum_bounded(seed: int) -> None:
    """No eigenvalue of the normalized matrix exceeds one."""
    gen = np.random.default_rng(seed)
    weights = gen.uniform(0.0, 1.0, size=(15, 15))
    weights[weights < 0.6] = 0.0
    a0 = sp.csr_matrix(np.triu(weights, 1) + np.triu(weights, 1).T)
    assert np.linalg.eigvalsh(densify(sym_normalize(a0))).max() <= 1.0 + 1e-9


def test_sym_normalize_exact_symmetry(rng: np.random.Generator) -> None:
    """The normalized matrix equals its transpose bit for bit."""
    weights = rng.uniform(0.1, 2.0, size=(12, 12))
    a0 = sp.csr_matrix(np.triu(weights, 1) + np.triu(weights, 1).T)
    dense = densify(sym_normalize(a0))
    assert np.array_equal(dense, dense.T)


def test_sym_normalize_rejects_bad_input() -> None:
    """Asymmetric, non-square and negative inputs are refused."""
    with pytest.raises(SymmetryError):
        sym_normalize(sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]])))
    with pytest.raises(DimensionError):
        sym_normalize(sp.csr_matrix(np.zeros((2, 3))))
    with pytest.raises(DomainError):
        sym_normalize(sp.csr_matrix(np.array([[0.0, -1.0], [-1.0, 0.0]])))


def test_validate_csr_duplicates() -> None:
    """Duplicate coordinates are reported."""
    dup = sp.csr_matrix((np.array([1.0, 1.0]), np.array([0, 0]), np.array([0, 2, 2])), shape=(2, 2))
    with pytest.raises(DimensionError, match="duplicate"):
        validate_csr(dup)
    validate_csr(ring_adjacency(6))


def test_prepare_graph_needs_k(small_graph: GraphDataset) -> None:
    """Without an input graph a kNN size is required."""
    features_only = small_graph.with_adjacency(None)
    with pytest.raises(ConfigError, match="no k"):
        prepare_graph(features_only, None)
    graph = prepare_graph(features_only, 3)
    assert graph.n == small_graph.n
    assert is_symmetric(graph.l0_sym)


def test_perturb_delete_extremes() -> None:
    """p=0 keeps the graph, p=1 removes every edge."""
    a0 = ring_adjacency(10)
    assert (perturb_edges(a0, 0.0, "delete", 1) != a0).nnz == 0
    assert perturb_edges(a0, 1.0, "delete", 1).nnz == 0


def test_perturb_delete_subset_and_deterministic() -> None:
    """Deleted graphs are symmetric subgraphs, identical for equal seeds."""
    a0 = ring_adjacency(40, width=3)
    first = perturb_edges(a0, 0.5, "delete", 3)
    second = perturb_edges(a0, 0.5, "delete", 3)
    assert is_symmetric(first)
    assert (first != second).nnz == 0
    assert first.nnz < a0.nnz
    assert (first - first.multiply(a0)).count_nonzero() == 0


@pytest.mark.parametrize("seed", range(5))
def test_perturb_delete_rate(seed: int) -> None:
    """Half of a hundred edges survive p=0.5, up to sampling noise."""
    a0 = ring_adjacency(50, width=2)
    assert a0.nnz // 2 == 100
    kept = perturb_edges(a0, 0.5, "delete", seed).nnz // 2
    assert 36 <= kept <= 64


def test_perturb_add_complete() -> None:
    """p=1 completes the graph and keeps existing weights."""
    a0 = sp.csr_matrix(np.array([[0.0, 2.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, 0.0]]))
    out = densify(perturb_edges(a0, 1.0, "add", 0))
    expected = np.array([[0.0, 2.0, 1.0], [2.0, 0.0, 1.0], [1.0, 1.0, 0.0]])
    np.testing.assert_array_equal(out, expected)


def test_perturb_rejects_bad_arguments() -> None:
    """Out-of-range probability and unknown mode."""
    a0 = ring_adjacency(6)
    with pytest.raises(DomainError):
        perturb_edges(a0, 1.5, "delete", 0)
    with pytest.raises(ConfigError, match="mode"):
        perturb_edges(a0, 0.5, "flip", 0)  # type: ignore[arg-type]


def test_read_edge_list(tmp_path: Path) -> None:
    """Comments, weights and repeated edges."""
    path = tmp_path / "toy.edges"
    path.write_text("# toy graph\n0 1\n1 2 0.5  # weighted\n\n2 1 0.25\n", encoding="utf-8")
    a = densify(read_edge_list(path))
    expected = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.25], [0.0, 0.25, 0.0]])
    np.testing.assert_array_equal(a, expected)
    assert read_edge_list(path, 5).shape == (5, 5)


@pytest.mark.parametrize(
    ("content", "match"),
    (
        pytest.param("0 1 2 3\n", "expected", id="columns"),
        pytest.param("0 x\n", "non-numeric", id="text"),
        pytest.param("0 7\n", "outside", id="range"),
    ),
)
def test_read_edge_list_errors(tmp_path: Path, content: str, match: str) -> None:
    """Malformed lines and dangling ids are dataset errors."""
    path = tmp_path / "bad.edges"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(DatasetError, match=match):
        read_edge_list(path, 4)


def test_edge_list_round_trip(tmp_path: Path, rng: np.random.Generator) -> None:
    """Writing then reading reproduces the weights exactly."""
    weights = np.triu(rng.uniform(size=(6, 6)) * (rng.uniform(size=(6, 6)) > 0.5), 1)
    a = sp.csr_matrix(weights + weights.T)
    path = tmp_path / "out.edges"
    count = write_edge_list(path, a)
    assert count == np.count_nonzero(weights)
    assert (read_edge_list(path, 6) != a).nnz == 0


def test_write_bipartite_edge_list(tmp_path: Path) -> None:
    """Anchor columns are written with their node ids."""
    path = tmp_path / "anchors.edges"
    r = np.array([[0.5, 0.0], [0.0, 1.0], [0.25, 0.75]])
    assert write_bipartite_edge_list(path, r, np.array([0, 2])) == 4
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines == ["0 0 0.5", "1 2 1", "2 0 0.25", "2 2 0.75"]
