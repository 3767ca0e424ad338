"""Adam optimizer: pinned update arithmetic and state invariants."""

import numpy as np
import pytest

from pixreg.autodiff import Tensor
from pixreg.errors import StateError
from pixreg.optim import adam_step, init_adam


def _param(value, dtype=np.float64):
    t = Tensor(np.array(value, dtype=dtype), requires_grad=True)
    return t


def test_zero_gradient_is_noop_for_any_step_count():
    p = _param([1.5, -2.0])
    state = init_adam([p], learning_rate=0.1)
    for _ in range(7):
        p.grad = np.zeros(2)
        adam_step([p], state)
    assert np.array_equal(p.data, [1.5, -2.0])
    assert state.step_count == 7


def test_single_step_hand_evaluated():
    # lr 0.1, g 1.0, defaults: folded bias correction gives
    # alpha_1 = 0.1 * sqrt(1e-3) / 0.1, update = alpha_1 * 0.1 / (sqrt(1e-3) + 1e-8)
    p = _param([1.0])
    state = init_adam([p], learning_rate=0.1)
    p.grad = np.array([1.0])
    adam_step([p], state)
    assert p.data[0] == pytest.approx(0.9000000316, abs=1e-9)


def test_single_step_float32_state():
    p = _param([1.0], dtype=np.float32)
    state = init_adam([p], learning_rate=0.1)
    p.grad = np.array([1.0], dtype=np.float32)
    adam_step([p], state)
    assert p.data[0] == pytest.approx(0.9000000316, abs=1e-6)


def test_constant_gradient_moves_monotonically():
    p = _param([1.0])
    state = init_adam([p], learning_rate=0.1)
    values = [p.data[0]]
    for _ in range(2):
        p.grad = np.array([1.0])
        adam_step([p], state)
        values.append(p.data[0])
    assert values[0] > values[1] > values[2]


def test_step_count_strictly_increases():
    p = _param([0.0])
    state = init_adam([p])
    for expected in range(1, 4):
        p.grad = np.array([0.5])
        adam_step([p], state)
        assert state.step_count == expected


def test_missing_gradient_is_state_error():
    p = _param([1.0])
    state = init_adam([p])
    with pytest.raises(StateError):
        adam_step([p], state)


def test_gradients_zeroed_after_step():
    p = _param([1.0])
    state = init_adam([p])
    p.grad = np.array([1.0])
    adam_step([p], state)
    assert p.grad is None


def test_moment_shapes_match_parameters():
    p = _param(np.ones((3, 2)))
    state = init_adam([p])
    assert state.first_moment[0].shape == (3, 2)
    assert state.second_moment[0].shape == (3, 2)
