"""Tests for itergraph.trainer."""

from __future__ import annotations

import logging
import math
from dataclasses import replace
from typing import TYPE_CHECKING

import numpy as np
import pytest

from itergraph import trainer
from itergraph.autodiff import Tape, scale
from itergraph.errors import ConfigError, DivergenceError
from itergraph.graph import densify
from itergraph.loaders import synth_inductive
from itergraph.message_passing import GcnWeights, gcn_forward
from itergraph.optim import AdamState, adam_step
from itergraph.trainer import (
    HyperParams,
    IdglParams,
    evaluate,
    fit,
    fit_inductive,
    fixed_iteration_accuracies,
    forward,
    prepare_forward,
)

if TYPE_CHECKING:
    from pytest_mock import MockerFixture

    from itergraph.loaders import GraphDataset


def _params(dataset: GraphDataset, hp: HyperParams) -> IdglParams:
    return IdglParams.initialize(dataset.d, dataset.n_classes, hp, np.random.default_rng(hp.seed))


@pytest.mark.parametrize(
    ("field", "value"),
    (
        pytest.param("lambda_", 1.5, id="lambda"),
        pytest.param("eta", -0.1, id="eta"),
        pytest.param("beta", -1.0, id="beta"),
        pytest.param("dropout", 1.0, id="dropout"),
        pytest.param("delta", 0.0, id="delta"),
        pytest.param("t_max", 0, id="t_max"),
        pytest.param("anchor_ratio", 0.0, id="ratio"),
    ),
)
def test_hyperparams_rejects(field: str, value: float) -> None:
    """Out-of-range settings are configuration errors."""
    with pytest.raises(ConfigError, match=field):
        HyperParams(**{field: value})


def test_anchors_for(caplog: pytest.LogCaptureFixture) -> None:
    """Explicit count, ratio, clipping and the missing case."""
    assert HyperParams(s=4).anchors_for(10) == 4
    assert HyperParams(anchor_ratio=0.25).anchors_for(10) == 3
    with caplog.at_level(logging.WARNING, logger="itergraph.trainer"):
        assert HyperParams(s=50).anchors_for(10) == 10
    assert "clipped" in caplog.text
    with pytest.raises(ConfigError, match="anchor_ratio"):
        HyperParams().anchors_for(10)


def test_prepare_forward_unknown_variant(small_graph: GraphDataset, fast_hp: HyperParams) -> None:
    """Only the two variants exist."""
    with pytest.raises(ConfigError, match="unknown variant"):
        prepare_forward(small_graph, fast_hp, "gat")  # type: ignore[arg-type]


@pytest.mark.parametrize("variant", ("idgl", "idgl-anch"))
def test_single_iteration_loss(small_graph: GraphDataset, fast_hp: HyperParams, variant: str) -> None:
    """With T = 1 the total loss is the first prediction plus regularization loss."""
    hp = replace(fast_hp, t_max=1)
    ctx = prepare_forward(small_graph, hp, variant)  # type: ignore[arg-type]
    result = forward(_params(small_graph, hp), small_graph, hp, "train", ctx)
    trace = result.trace
    assert trace.iterations_run == 1
    assert trace.delta_a_per_iter == []
    assert result.loss.item() == trace.pred_losses[0] + trace.reg_losses[0]


@pytest.mark.parametrize("variant", ("idgl", "idgl-anch"))
def test_total_loss_aggregation(small_graph: GraphDataset, fast_hp: HyperParams, variant: str) -> None:
    """The first iteration counts in full, later iterations through their mean."""
    hp = replace(fast_hp, t_max=4)
    ctx = prepare_forward(small_graph, hp, variant)  # type: ignore[arg-type]
    result = forward(
        _params(small_graph, hp),
        small_graph,
        hp,
        "train",
        ctx,
        rng=np.random.default_rng(0),
        dynamic_stop=False,
    )
    trace = result.trace
    assert trace.iterations_run == 4
    per_iteration = [p + r for p, r in zip(trace.pred_losses, trace.reg_losses, strict=True)]
    expected = per_iteration[0] + sum(per_iteration[1:]) / 3
    assert result.loss.item() == pytest.approx(expected, rel=1e-12)


def test_eval_forward_leaves_state_alone(small_graph: GraphDataset, fast_hp: HyperParams) -> None:
    """Inference changes neither the weights nor the optimizer moments."""
    ctx = prepare_forward(small_graph, fast_hp, "idgl")
    params = _params(small_graph, fast_hp)
    grads = forward(params, small_graph, fast_hp, "train", ctx).gradients()
    values, state = adam_step(params.as_dict(), grads, AdamState.zeros(params.as_dict()), 0.01, 5e-4)
    params = IdglParams.from_dict(values)
    params_before = params.copy()
    state_before = state.copy()

    forward(params, small_graph, fast_hp, "eval", ctx)
    evaluate(params, small_graph, fast_hp, "idgl", ctx=ctx)

    for name in trainer.PARAM_NAMES:
        assert getattr(params, name).tobytes() == getattr(params_before, name).tobytes()
        assert state.m[name].tobytes() == state_before.m[name].tobytes()
        assert state.v[name].tobytes() == state_before.v[name].tobytes()
    assert state.step == state_before.step


def test_lambda_one_is_plain_gcn(small_graph: GraphDataset, fast_hp: HyperParams) -> None:
    """λ = 1 predictions equal a two-layer GCN on the normalized input graph bit for bit."""
    hp = replace(fast_hp, lambda_=1.0)
    ctx = prepare_forward(small_graph, hp, "idgl")
    params = _params(small_graph, hp)
    trace = forward(params, small_graph, hp, "eval", ctx).trace
    tape = Tape()
    _, logits = gcn_forward(
        tape.constant(small_graph.x),
        tape.constant(densify(ctx.graph.l0_sym)),
        GcnWeights(tape.leaf(params.w1), tape.leaf(params.w2)),
    )
    assert np.array_equal(trace.predictions, logits.value)


def test_lambda_one_anchor_variant(small_graph: GraphDataset, fast_hp: HyperParams) -> None:
    """The anchor variant ignores its affinities when λ = 1."""
    hp = replace(fast_hp, lambda_=1.0)
    params = _params(small_graph, hp)
    dense = forward(params, small_graph, hp, "eval", prepare_forward(small_graph, hp, "idgl")).trace
    anchor = forward(params, small_graph, hp, "eval", prepare_forward(small_graph, hp, "idgl-anch")).trace
    np.testing.assert_allclose(anchor.predictions, dense.predictions, atol=1e-10)


def test_empty_learned_graphs_agree(small_graph: GraphDataset, fast_hp: HyperParams) -> None:
    """When ε prunes every similarity both variants pass messages over λ·L0 only."""
    hp = replace(fast_hp, eps=1.5, beta=0.0)
    params = _params(small_graph, hp)
    dense = forward(params, small_graph, hp, "eval", prepare_forward(small_graph, hp, "idgl"))
    anchor = forward(params, small_graph, hp, "eval", prepare_forward(small_graph, hp, "idgl-anch"))
    assert dense.trace.iterations_run == anchor.trace.iterations_run == 2
    assert dense.loss.item() == pytest.approx(anchor.loss.item(), abs=1e-6)
    np.testing.assert_allclose(dense.trace.predictions, anchor.trace.predictions, atol=1e-10)


@pytest.mark.parametrize("variant", ("idgl", "idgl-anch"))
def test_delta_sequence(small_graph: GraphDataset, fast_hp: HyperParams, variant: str) -> None:
    """One relative change per iteration after the first, never negative."""
    hp = replace(fast_hp, t_max=5)
    ctx = prepare_forward(small_graph, hp, variant)  # type: ignore[arg-type]
    trace = forward(_params(small_graph, hp), small_graph, hp, "eval", ctx).trace
    assert 2 <= trace.iterations_run <= 5
    assert len(trace.delta_a_per_iter) == trace.iterations_run - 1
    assert all(value >= 0 for value in trace.delta_a_per_iter)
    assert len(trace.iteration_predictions) == trace.iterations_run


def test_fixed_length_runs_all_iterations(small_graph: GraphDataset, fast_hp: HyperParams) -> None:
    """Without dynamic stopping exactly t_max iterations run."""
    hp = replace(fast_hp, t_max=4, delta=1e9)
    ctx = prepare_forward(small_graph, hp, "idgl")
    params = _params(small_graph, hp)
    trace = forward(params, small_graph, hp, "eval", ctx, dynamic_stop=False).trace
    assert trace.iterations_run == 4
    stopped = forward(params, small_graph, hp, "eval", ctx).trace
    assert stopped.iterations_run == 2


def test_gradients_cover_parameters(small_graph: GraphDataset, fast_hp: HyperParams) -> None:
    """Training mode yields a finite gradient for every weight."""
    ctx = prepare_forward(small_graph, fast_hp, "idgl")
    params = _params(small_graph, fast_hp)
    grads = forward(params, small_graph, fast_hp, "train", ctx).gradients()
    assert set(grads) == set(trainer.PARAM_NAMES)
    for name, grad in grads.items():
        assert grad.shape == getattr(params, name).shape
        assert np.isfinite(grad).all()


@pytest.mark.parametrize("variant", ("idgl", "idgl-anch"))
def test_fit_report(small_graph: GraphDataset, fast_hp: HyperParams, variant: str) -> None:
    """Training produces epoch records and a summary with test accuracy."""
    seen = []
    params, report = fit(small_graph, fast_hp, variant, on_epoch=seen.append)  # type: ignore[arg-type]
    assert isinstance(params, IdglParams)
    assert 1 <= len(report.epochs) <= fast_hp.epochs
    assert seen == report.epochs
    assert 1 <= report.best_epoch <= len(report.epochs)
    assert report.test_acc is not None
    assert 0.0 <= report.test_acc <= 1.0
    records = report.to_records()
    assert records[0]["type"] == "epoch"
    summary = records[-1]
    assert summary["type"] == "summary"
    assert summary["iterations_run"] <= fast_hp.t_max
    assert len(summary["delta_seq"]) == summary["iterations_run"] - 1


def test_fit_is_deterministic(small_graph: GraphDataset, fast_hp: HyperParams) -> None:
    """Equal seeds give equal losses to the last bit."""
    _, first = fit(small_graph, fast_hp, "idgl")
    _, second = fit(small_graph, fast_hp, "idgl")
    assert [e.train_loss for e in first.epochs] == [e.train_loss for e in second.epochs]
    assert first.test_acc == second.test_acc


def test_fit_early_stops(small_graph: GraphDataset, fast_hp: HyperParams) -> None:
    """Training halts after ``patience`` epochs without dev improvement."""
    hp = replace(fast_hp, epochs=50, patience=1, lr=0.0)
    _, report = fit(small_graph, hp, "idgl")
    assert report.best_epoch == 1
    assert len(report.epochs) == 2


def test_fit_divergence(small_graph: GraphDataset, fast_hp: HyperParams, mocker: MockerFixture) -> None:
    """A non-finite loss stops training with the epoch and iteration."""
    real = trainer.softmax_cross_entropy
    mocker.patch(
        "itergraph.trainer.softmax_cross_entropy",
        side_effect=lambda logits, labels, mask: scale(real(logits, labels, mask), math.nan),
    )
    with pytest.raises(DivergenceError, match="epoch 1") as exc_info:
        fit(small_graph, fast_hp, "idgl")
    assert exc_info.value.epoch == 1
    assert exc_info.value.iteration == 1
    assert exc_info.value.code == 5


def test_evaluate_and_fixed_iterations(small_graph: GraphDataset, fast_hp: HyperParams) -> None:
    """Fixed-length accuracies are reported for every T up to t_max."""
    params = _params(small_graph, fast_hp)
    acc, trace = evaluate(params, small_graph, fast_hp, "idgl-anch")
    assert 0.0 <= acc <= 1.0
    assert trace.anchor_idx is not None
    assert trace.anchor_idx.size == fast_hp.s
    fixed = fixed_iteration_accuracies(params, small_graph, fast_hp, "idgl-anch")
    assert list(fixed) == [1, 2, 3]
    assert all(0.0 <= value <= 1.0 for value in fixed.values())


@pytest.mark.parametrize("variant", ("idgl", "idgl-anch"))
def test_fit_inductive(variant: str) -> None:
    """Mini-batch graph classification runs on generated graphs."""
    graphs = synth_inductive(6, 6, 2, 0.5, seed=0, dim=4)
    hp = HyperParams(k=2, s=3, t_max=2, epochs=2, patience=2, batch_size=2, hidden=4, seed=0)
    params, report = fit_inductive(graphs[:4], graphs[4:], hp, variant)  # type: ignore[arg-type]
    assert params.w2.shape == (4, 2)
    assert len(report.epochs) == 2
    assert 0.0 <= report.best_dev_acc <= 1.0
    with pytest.raises(ConfigError):
        fit_inductive(graphs, [], hp)
