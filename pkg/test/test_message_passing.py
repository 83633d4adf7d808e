"""Tests for itergraph.message_passing."""

from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp

from itergraph.autodiff import Tape
from itergraph.errors import DimensionError, DomainError, OracleScaleError
from itergraph.learner import AnchorAffinity
from itergraph.message_passing import (
    GcnWeights,
    gcn_forward,
    gcn_layer,
    hybrid_mp,
    mp12,
    propagate,
    recover_anchor_adjacency,
    recover_node_adjacency,
)

SEEDS = range(20)


def test_recover_adjacency_hand_example() -> None:
    """Three nodes, two anchors, worked out by hand."""
    aff = AnchorAffinity.from_array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    np.testing.assert_allclose(
        recover_node_adjacency(aff),
        [[0.5, 0.5, 0.0], [0.25, 0.5, 0.25], [0.0, 0.5, 0.5]],
    )
    np.testing.assert_allclose(recover_anchor_adjacency(aff), [[0.75, 0.25], [0.25, 0.75]])


@pytest.mark.parametrize("seed", SEEDS)
def test_mp12_matches_recovered_node_graph(seed: int) -> None:
    """Passing through anchors equals multiplying by the recovered graph."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 51))
    s = int(rng.integers(1, min(10, n) + 1))
    r = rng.uniform(0.0, 1.0, size=(n, s))
    aff = AnchorAffinity.from_array(r)
    f = aff.r.tape.constant(rng.standard_normal((n, 3)))
    node = recover_node_adjacency(aff)
    np.testing.assert_allclose(mp12(f, aff).value, node @ f.value, rtol=0, atol=1e-10)
    np.testing.assert_allclose(node.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(recover_anchor_adjacency(aff).sum(axis=1), 1.0, atol=1e-12)


def test_recover_node_adjacency_size_limit() -> None:
    """The dense oracle refuses large graphs."""
    aff = AnchorAffinity.from_array(np.ones((501, 2)))
    with pytest.raises(OracleScaleError):
        recover_node_adjacency(aff)


def test_mp12_dimension() -> None:
    """Feature rows must match the node count."""
    aff = AnchorAffinity.from_array(np.ones((4, 2)))
    with pytest.raises(DimensionError):
        mp12(aff.r.tape.constant(np.ones((3, 2))), aff)


def test_mp12_keeps_memory_linear() -> None:
    """No recorded value of the anchor path is n×n."""
    n = 60
    tape = Tape()
    aff = AnchorAffinity.from_var(tape.leaf(np.random.default_rng(0).uniform(size=(n, 4))))
    mp12(tape.constant(np.ones((n, 3))), aff)
    assert all(node.out.shape != (n, n) for node in tape.nodes)


def test_propagate_dense_sparse_callable(tape: Tape, rng: np.random.Generator) -> None:
    """All three adjacency forms give the same product."""
    adj = rng.uniform(size=(4, 4))
    f = tape.constant(rng.standard_normal((4, 2)))
    expected = adj @ f.value
    np.testing.assert_allclose(propagate(f, tape.constant(adj)).value, expected)
    np.testing.assert_allclose(propagate(f, sp.csr_matrix(adj)).value, expected)
    np.testing.assert_allclose(propagate(f, lambda v: v).value, f.value)


def test_gcn_forward_matches_numpy(tape: Tape, rng: np.random.Generator) -> None:
    """Two layers without dropout are relu(A·X·W1) then A·Z·W2."""
    adj = rng.uniform(size=(5, 5))
    x = rng.standard_normal((5, 3))
    w1 = rng.standard_normal((3, 4))
    w2 = rng.standard_normal((4, 2))
    z, logits = gcn_forward(tape.constant(x), tape.constant(adj), GcnWeights(tape.leaf(w1), tape.leaf(w2)))
    hidden = np.maximum(adj @ x @ w1, 0.0)
    np.testing.assert_allclose(z.value, hidden)
    np.testing.assert_allclose(logits.value, adj @ hidden @ w2)


def test_gcn_layer_checks(tape: Tape) -> None:
    """Shape, activation and generator checks."""
    f = tape.constant(np.ones((2, 3)))
    adj = tape.constant(np.eye(2))
    with pytest.raises(DimensionError):
        gcn_layer(f, adj, tape.leaf(np.ones((2, 2))))
    with pytest.raises(DomainError):
        gcn_layer(f, adj, tape.leaf(np.ones((3, 2))), "tanh")  # type: ignore[arg-type]
    with pytest.raises(DomainError, match="random generator"):
        gcn_layer(f, adj, tape.leaf(np.ones((3, 2))), rate=0.5, training=True)
    with pytest.raises(DimensionError):
        GcnWeights(tape.leaf(np.ones((3, 4))), tape.leaf(np.ones((3, 2))))


def test_hybrid_mp_lambda_one_is_initial_graph(rng: np.random.Generator) -> None:
    """λ = 1 reduces hybrid passing to L0·F."""
    n = 6
    l0 = sp.csr_matrix(rng.uniform(size=(n, n)))
    aff = AnchorAffinity.from_array(rng.uniform(size=(n, 2)))
    f = aff.r.tape.constant(rng.standard_normal((n, 3)))
    out = hybrid_mp(f, l0, aff, aff, 1.0, 0.5)
    np.testing.assert_array_equal(out.value, l0 @ f.value)


def test_hybrid_mp_mixture(rng: np.random.Generator) -> None:
    """Hybrid passing is the weighted sum of its three parts."""
    n = 7
    tape = Tape()
    l0 = sp.csr_matrix(rng.uniform(size=(n, n)))
    r_t = AnchorAffinity.from_array(rng.uniform(size=(n, 3)), tape=tape)
    r_1 = AnchorAffinity.from_array(rng.uniform(size=(n, 3)), tape=tape)
    f = tape.constant(rng.standard_normal((n, 2)))
    out = hybrid_mp(f, l0, r_t, r_1, 0.4, 0.25)
    expected = 0.4 * (l0 @ f.value) + 0.6 * (
        0.25 * recover_node_adjacency(r_t) @ f.value + 0.75 * recover_node_adjacency(r_1) @ f.value
    )
    np.testing.assert_allclose(out.value, expected, atol=1e-12)
    with pytest.raises(DomainError):
        hybrid_mp(f, l0, r_t, r_1, -0.1, 0.5)
