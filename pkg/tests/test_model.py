"""Model: parameter counts, forward semantics, gradients, checkpoints."""

import numpy as np
import pytest

from pixreg import autodiff as ad
from pixreg.autodiff import Tensor
from pixreg.errors import ShapeError
from pixreg.model import (
    ModelSpec,
    build,
    forward,
    forward_array,
    load_checkpoint,
    parameter_count,
    predict_clipped,
    save_checkpoint,
)

from helpers import numerical_gradient, rel_error


class TestParameterCounts:
    def test_small_medium_large_with_7_inputs(self):
        assert parameter_count(ModelSpec.from_size_class("small", 7)) == 930_521
        assert parameter_count(ModelSpec.from_size_class("medium", 7)) == 3_539_761
        assert parameter_count(ModelSpec.from_size_class("large", 7)) == 6_744_241

    def test_within_two_percent_of_published_sizes(self):
        published = {"small": 925_000, "medium": 3_500_000, "large": 6_700_000}
        for name, target in published.items():
            count = parameter_count(ModelSpec.from_size_class(name, 7))
            assert abs(count - target) / target < 0.02

    def test_formula_matches_enumerated_state(self):
        for spec in (
            ModelSpec(input_dim=5, hidden_width=12),
            ModelSpec(input_dim=7, hidden_width=430, size_class="small"),
            ModelSpec(input_dim=3, hidden_width=9, n_residual_blocks=3),
        ):
            state = build(spec, init_seed=0)
            assert state.n_parameters() == parameter_count(spec)


def _tiny_state(seed=0, input_dim=5, h=16):
    return build(ModelSpec(input_dim=input_dim, hidden_width=h), init_seed=seed)


class TestForward:
    def test_zero_weights_give_zero_output(self):
        state = _tiny_state()
        for p in state.params:
            p.data = np.zeros_like(p.data)
        X = np.random.default_rng(0).uniform(size=(4, 5)).astype(np.float32)
        assert np.array_equal(forward_array(state, X), np.zeros((4, 1)))

    def test_zero_weights_with_output_bias(self):
        state = _tiny_state()
        for p in state.params:
            p.data = np.zeros_like(p.data)
        state.params[state.names.index("out.b")].data = np.array([3.25], dtype=np.float32)
        X = np.random.default_rng(1).uniform(size=(6, 5)).astype(np.float32)
        assert np.allclose(forward_array(state, X), 3.25)

    def test_forward_deterministic(self):
        state = _tiny_state(seed=3)
        X = np.random.default_rng(2).uniform(size=(10, 5)).astype(np.float32)
        assert np.array_equal(forward_array(state, X), forward_array(state, X))

    def test_graph_forward_matches_array_forward(self):
        state = _tiny_state(seed=4)
        X = np.random.default_rng(3).uniform(size=(8, 5)).astype(np.float32)
        graph_out = forward(state, Tensor(X)).data
        assert np.array_equal(graph_out, forward_array(state, X))

    def test_width_mismatch_is_shape_error(self):
        state = _tiny_state()
        with pytest.raises(ShapeError):
            forward_array(state, np.zeros((2, 4), dtype=np.float32))

    def test_residual_block_is_identity_on_nonnegative_input(self):
        # zeroing both dense layers inside the blocks leaves relu(t + 0) = t
        state = _tiny_state(seed=5)
        for name, p in zip(state.names, state.params):
            if name.startswith("rb"):
                p.data = np.zeros_like(p.data)
        X = np.random.default_rng(4).uniform(size=(5, 5)).astype(np.float32)
        w_in, b_in = state._in
        t = np.maximum(X @ w_in.data + b_in.data, 0)  # non-negative by construction
        w_mid, b_mid = state._mid
        t = np.maximum(t @ w_mid.data + b_mid.data, 0)
        w_out, b_out = state._out
        expected = t @ w_out.data + b_out.data
        assert np.allclose(forward_array(state, X), expected, atol=1e-6)

    def test_end_to_end_gradients_match_finite_differences(self):
        spec = ModelSpec(input_dim=5, hidden_width=8)
        state = build(spec, init_seed=7).astype(np.float64)
        rng = np.random.default_rng(9)
        X = rng.uniform(size=(4, 5))
        y = rng.uniform(0, 255, size=(4, 1))

        pred = forward(state, Tensor(X))
        loss = ad.mean_all(ad.square(ad.sub(pred, Tensor(y))))
        loss.backward()

        arrays = [p.data for p in state.params]

        def loss_of(idx):
            def fn(*arrs):
                clone = build(spec, init_seed=7).astype(np.float64)
                for p, a in zip(clone.params, arrs):
                    p.data = a
                out = forward_array(clone, X)
                return float(np.mean((out - y) ** 2))
            return fn

        worst = 0.0
        for i, p in enumerate(state.params):
            numeric = numerical_gradient(loss_of(i), arrays, wrt=i)
            worst = max(worst, rel_error(p.grad, numeric))
        assert worst < 1e-3


class TestPredictClipped:
    def _biased_state(self, bias):
        state = _tiny_state()
        for p in state.params:
            p.data = np.zeros_like(p.data)
        state.params[state.names.index("out.b")].data = np.array([bias], dtype=np.float32)
        return state

    def test_lower_clamp(self):
        state = self._biased_state(-12.3)
        assert np.all(predict_clipped(state, np.zeros((3, 5), dtype=np.float32)) == 0.0)

    def test_upper_clamp(self):
        state = self._biased_state(300.0)
        assert np.all(predict_clipped(state, np.zeros((3, 5), dtype=np.float32)) == 255.0)

    def test_interior_passthrough(self):
        state = self._biased_state(128.4)
        out = predict_clipped(state, np.zeros((2, 5), dtype=np.float32))
        assert np.allclose(out, 128.4, atol=1e-4)


class TestCheckpoint:
    def test_bit_exact_roundtrip(self, tmp_path):
        state = _tiny_state(seed=11)
        meta = {"bounds": {"u1": (1.0, 2.0)}, "note": "fixture"}
        path = tmp_path / "model.ckpt"
        save_checkpoint(state, path, meta=meta)
        loaded, loaded_meta = load_checkpoint(path)
        assert loaded.spec == state.spec
        assert loaded_meta["note"] == "fixture"
        for a, b in zip(state.params, loaded.params):
            assert np.array_equal(a.data, b.data)
            assert a.data.dtype == b.data.dtype

    def test_rewrite_is_byte_identical(self, tmp_path):
        state = _tiny_state(seed=12)
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(state, p1)
        save_checkpoint(state, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_build_deterministic_under_seed(self):
        a = build(ModelSpec(input_dim=5, hidden_width=30), init_seed=21)
        b = build(ModelSpec(input_dim=5, hidden_width=30), init_seed=21)
        for x, y in zip(a.params, b.params):
            assert np.array_equal(x.data, y.data)
