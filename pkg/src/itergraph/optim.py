"""Adam with L2 weight decay folded into the gradient."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from itergraph.constants import ADAM_BETA1, ADAM_BETA2, ADAM_EPS
from itergraph.errors import DimensionError, DomainError

if TYPE_CHECKING:  # pragma: no cover
    from collections.abc import Mapping

    from itergraph.types import FloatArray

_logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """First and second moment estimates per parameter name."""

    m: dict[str, FloatArray] = field(default_factory=dict)
    v: dict[str, FloatArray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros(cls, params: Mapping[str, FloatArray]) -> AdamState:
        """Zero moments shaped like ``params``."""
        return cls(
            m={name: np.zeros_like(value) for name, value in params.items()},
            v={name: np.zeros_like(value) for name, value in params.items()},
        )

    def copy(self) -> AdamState:
        """Return an independent copy."""
        return AdamState(
            m={name: value.copy() for name, value in self.m.items()},
            v={name: value.copy() for name, value in self.v.items()},
            step=self.step,
        )


def adam_step(
    params: Mapping[str, FloatArray],
    grads: Mapping[str, FloatArray],
    state: AdamState,
    lr: float,
    weight_decay: float,
) -> tuple[dict[str, FloatArray], AdamState]:
    """Apply one Adam update and return new parameters and state.

    Neither ``params`` nor ``state`` is modified.
    """
    if lr < 0 or weight_decay < 0:
        msg = f"lr and weight_decay must be non-negative, got {lr} and {weight_decay}"
        raise DomainError(msg)
    new_state = state.copy()
    new_state.step += 1
    t = new_state.step
    correction1 = 1.0 - ADAM_BETA1**t
    correction2 = 1.0 - ADAM_BETA2**t

    updated: dict[str, FloatArray] = {}
    for name, value in params.items():
        grad = grads.get(name)
        if grad is None:
            updated[name] = value.copy()
            continue
        if grad.shape != value.shape:
            msg = f"gradient of {name} has shape {grad.shape}, parameter has {value.shape}"
            raise DimensionError(msg)
        grad = grad + weight_decay * value
        m = new_state.m.setdefault(name, np.zeros_like(value))
        v = new_state.v.setdefault(name, np.zeros_like(value))
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * grad
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        updated[name] = value - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return updated, new_state


__all__ = ["AdamState", "adam_step"]
