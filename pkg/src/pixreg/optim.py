"""Adam optimizer over lists of parameter tensors.

Uses the rearranged update from the original method: the bias corrections
are folded into a per-step learning rate, and epsilon stabilizes the raw
(uncorrected) second-moment root,

    alpha_t = lr * sqrt(1 - beta2^t) / (1 - beta1^t)
    p      -= alpha_t * m / (sqrt(v) + eps)

which is the form the common deep-learning frameworks implement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .errors import StateError


@dataclass
class AdamState:
    """Per-parameter moment estimates plus the shared step counter."""

    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    scratch: list[np.ndarray] | None = None


def init_adam(params: list[Tensor], learning_rate: float = 1e-4,
              beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    return AdamState(
        first_moment=[np.zeros_like(p.data) for p in params],
        second_moment=[np.zeros_like(p.data) for p in params],
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
        scratch=[np.empty_like(p.data) for p in params],
    )


def adam_step(params: list[Tensor], state: AdamState) -> None:
    """One Adam update in place; gradients are zeroed afterwards."""
    for i, p in enumerate(params):
        if p.grad is None:
            raise StateError(f"adam_step: parameter {i} has no gradient")
        if state.first_moment[i].shape != p.data.shape:
            raise StateError(f"adam_step: moment shape mismatch for parameter {i}")
    if state.scratch is None:
        state.scratch = [np.empty_like(p.data) for p in params]

    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    alpha_t = state.learning_rate * math.sqrt(1.0 - b2 ** t) / (1.0 - b1 ** t)

    for p, m, v, tmp in zip(params, state.first_moment, state.second_moment, state.scratch):
        g = p.grad
        np.multiply(m, b1, out=m)
        np.multiply(g, 1.0 - b1, out=tmp)
        np.add(m, tmp, out=m)
        np.multiply(v, b2, out=v)
        np.multiply(g, g, out=tmp)
        np.multiply(tmp, 1.0 - b2, out=tmp)
        np.add(v, tmp, out=v)
        np.sqrt(v, out=tmp)
        np.add(tmp, state.epsilon, out=tmp)
        np.divide(m, tmp, out=tmp)
        np.multiply(tmp, alpha_t, out=tmp)
        np.subtract(p.data, tmp, out=p.data)
        p.grad = None
