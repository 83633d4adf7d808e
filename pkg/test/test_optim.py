"""Tests for itergraph.optim."""

import numpy as np
import pytest

from itergraph.errors import DimensionError, DomainError
from itergraph.optim import AdamState, adam_step


def test_first_step_moves_by_lr() -> None:
    """Bias correction makes the first step ±lr per coordinate."""
    params = {"w": np.array([[1.0, -2.0, 0.5]])}
    grads = {"w": np.array([[3.0, -0.1, 0.0]])}
    updated, state = adam_step(params, grads, AdamState.zeros(params), 0.1, 0.0)
    np.testing.assert_allclose(updated["w"], [[0.9, -1.9, 0.5]], atol=1e-6)
    assert state.step == 1


def test_inputs_untouched() -> None:
    """The step is functional."""
    params = {"w": np.ones((2, 2))}
    state = AdamState.zeros(params)
    adam_step(params, {"w": np.ones((2, 2))}, state, 0.01, 0.0)
    np.testing.assert_array_equal(params["w"], np.ones((2, 2)))
    assert state.step == 0
    assert not state.m["w"].any()


def test_weight_decay_pulls_to_zero() -> None:
    """With a zero gradient decay alone shrinks the weights."""
    params = {"w": np.array([[2.0, -2.0]])}
    updated, _ = adam_step(params, {"w": np.zeros((1, 2))}, AdamState.zeros(params), 0.01, 0.5)
    assert (np.abs(updated["w"]) < 2.0).all()


def test_missing_gradient_keeps_parameter() -> None:
    """Parameters without a gradient are copied."""
    params = {"a": np.ones((1, 1)), "b": np.ones((1, 1))}
    updated, _ = adam_step(params, {"a": np.ones((1, 1))}, AdamState.zeros(params), 0.1, 0.0)
    np.testing.assert_array_equal(updated["b"], params["b"])
    assert updated["b"] is not params["b"]


def test_minimizes_quadratic() -> None:
    """Repeated steps reach the minimum of (w - 3)²."""
    params = {"w": np.zeros((1, 1))}
    state = AdamState.zeros(params)
    for _ in range(500):
        params, state = adam_step(params, {"w": 2.0 * (params["w"] - 3.0)}, state, 0.05, 0.0)
    assert params["w"][0, 0] == pytest.approx(3.0, abs=1e-2)


def test_rejects_bad_arguments() -> None:
    """Negative rates and shape mismatches."""
    params = {"w": np.ones((1, 2))}
    with pytest.raises(DomainError):
        adam_step(params, params, AdamState.zeros(params), -0.1, 0.0)
    with pytest.raises(DimensionError):
        adam_step(params, {"w": np.ones((2, 1))}, AdamState.zeros(params), 0.1, 0.0)
