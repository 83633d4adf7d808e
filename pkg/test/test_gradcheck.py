"""Tests for itergraph.gradcheck."""

from __future__ import annotations

from typing import TYPE_CHECKING

import pytest

from itergraph.errors import GradcheckError
from itergraph.gradcheck import CHECKS, CheckResult, assert_passed, check_end_to_end, run_gradcheck

if TYPE_CHECKING:
    from pytest_mock import MockerFixture

    from itergraph.autodiff import Var


@pytest.mark.parametrize("name", sorted(CHECKS))
def test_operation_gradient(name: str) -> None:
    """Analytic and central-difference gradients agree for each operation."""
    (result,) = run_gradcheck(3, names=[name], end_to_end=False)
    assert result.passed, f"{name}: {result.max_rel_error:.2e}"


@pytest.mark.parametrize("variant", ("idgl", "idgl-anch"))
@pytest.mark.parametrize("seed", (0, 1))
def test_end_to_end_gradient(seed: int, variant: str) -> None:
    """The unrolled loss is differentiated correctly through every iteration."""
    result = check_end_to_end(seed, variant)  # type: ignore[arg-type]
    assert result.max_rel_error < 1e-4
    assert result.passed


def test_broken_backward_is_caught(mocker: MockerFixture) -> None:
    """A wrong derivative rule fails the check that uses it."""

    def bad_square(a: Var) -> Var:
        value = a.value
        return a.tape.record("square", value * value, (a,), lambda g: (g * value,))

    mocker.patch("itergraph.autodiff.square", side_effect=bad_square)
    results = run_gradcheck(0, names=["square", "relu"], end_to_end=False)
    assert [r.passed for r in results] == [False, True]
    with pytest.raises(GradcheckError, match=r"failed for square \("):
        assert_passed(results)


def test_assert_passed_quiet() -> None:
    """Nothing is raised when every check passes."""
    assert_passed([CheckResult("relu", 1e-9, 1e-5)])
