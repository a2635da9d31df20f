from __future__ import annotations

import numpy as np
import pytest

from stfactor.errors import ShapeError, UsageError
from stfactor.layers import (
    FULL_KERNEL,
    LSTM,
    BatchNorm,
    Conv3d,
    ConvSpec,
    Dropout,
    Linear,
    MaxPool3d,
    ReLU,
    conv_backward,
    conv_forward,
    lstm_sequence,
    maxpool3d_backward,
    maxpool3d_forward,
    pool_output_extent,
    sigmoid,
    softmax,
)
from stfactor.tensor import Rng
from stfactor.verification import conv_oracle, lstm_oracle, maxpool_oracle


def _ones_spec(**kwargs) -> ConvSpec:
    return ConvSpec(cin=1, cout=1, kernel=FULL_KERNEL, stride=(1, 1, 1), padding=(1, 1, 1), bias=False, **kwargs)


class TestConvForward:
    def test_all_ones_center(self):
        x = np.ones((1, 1, 3, 3, 3), dtype=np.float32)
        w = np.ones((1, 1, 3, 3, 3), dtype=np.float32)
        y = conv_forward(_ones_spec(), w, None, x)
        assert y.shape == (1, 1, 3, 3, 3)
        assert y[0, 0, 1, 1, 1] == 27.0
        assert y[0, 0, 0, 0, 0] == 8.0

    def test_delta_kernel_is_identity(self, rng):
        x = rng.normal(2 * 4 * 5 * 3).reshape(1, 2, 4, 5, 3).astype(np.float32)
        spec = ConvSpec(cin=2, cout=2, kernel=FULL_KERNEL, padding=(1, 1, 1), bias=False)
        w = np.zeros(spec.weight_shape, dtype=np.float32)
        w[0, 0, 1, 1, 1] = 1.0
        w[1, 1, 1, 1, 1] = 1.0
        assert np.array_equal(conv_forward(spec, w, None, x), x)

    def test_matches_oracle_float32(self, rng):
        spec = ConvSpec(cin=2, cout=3, stride=(2, 2, 2), padding=(1, 1, 1))
        layer = Conv3d(spec, rng)
        layer.params["bias"][...] = np.array([0.1, -0.2, 0.3])
        x = rng.normal(2 * 4 * 5 * 5).reshape(1, 2, 4, 5, 5).astype(np.float32)
        expected = conv_oracle(spec, layer.params["weight"], layer.params["bias"], x)
        assert np.max(np.abs(layer.forward(x) - expected)) <= 1e-5

    def test_channel_mismatch(self):
        spec = ConvSpec(cin=2, cout=1)
        with pytest.raises(ShapeError):
            conv_forward(spec, np.zeros(spec.weight_shape), None, np.zeros((1, 3, 3, 3, 3)))

    def test_too_small_input(self):
        spec = ConvSpec(cin=1, cout=1, padding=(0, 0, 0))
        with pytest.raises(ShapeError):
            conv_forward(spec, np.zeros(spec.weight_shape), None, np.zeros((1, 1, 2, 3, 3)))

    def test_translation_equivariance(self, rng):
        spec = ConvSpec(cin=1, cout=1, bias=False)
        w = rng.normal(27).reshape(spec.weight_shape)
        x = rng.normal(6 * 6 * 6).reshape(1, 1, 6, 6, 6)
        shifted = np.roll(x, 1, axis=4)
        y, ys = conv_forward(spec, w, None, x), conv_forward(spec, w, None, shifted)
        assert np.allclose(ys[..., 1:], y[..., :-1], atol=1e-12)

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            ConvSpec(cin=1, cout=1, stride=(0, 1, 1))


class TestConvBackward:
    def test_zero_grad_out(self, rng):
        spec = ConvSpec(cin=2, cout=2, stride=(2, 2, 2), padding=(1, 1, 1))
        w = rng.normal(spec.weight_count).reshape(spec.weight_shape)
        x = rng.normal(2 * 64).reshape(1, 2, 4, 4, 4)
        grad_out = np.zeros((1, 2, 2, 2, 2))
        grad_x, grad_w, grad_b = conv_backward(spec, w, x, grad_out)
        assert not grad_x.any()
        assert not grad_w.any()
        assert not grad_b.any()

    def test_weight_gradient_counts_valid_positions(self):
        x = np.ones((1, 1, 3, 3, 3))
        w = np.zeros((1, 1, 3, 3, 3))
        _, grad_w, _ = conv_backward(_ones_spec(), w, x, np.ones((1, 1, 3, 3, 3)))
        per_axis = np.array([2.0, 3.0, 2.0])
        expected = per_axis[:, None, None] * per_axis[None, :, None] * per_axis[None, None, :]
        assert np.array_equal(grad_w[0, 0], expected)

    def test_shape_mismatch(self):
        spec = _ones_spec()
        with pytest.raises(ShapeError):
            conv_backward(spec, np.zeros(spec.weight_shape), np.zeros((1, 1, 3, 3, 3)), np.zeros((1, 1, 2, 2, 2)))


class TestMaxPool:
    def test_max_of_all(self):
        x = np.arange(8.0).reshape(1, 1, 2, 2, 2)
        y, idx = maxpool3d_forward(x)
        assert y.ravel().tolist() == [7.0]
        assert idx.ravel().tolist() == [7]

    def test_unit_extent_survives_ceil_mode(self):
        y, _ = maxpool3d_forward(np.ones((1, 1, 1, 3, 5)))
        assert y.shape == (1, 1, 1, 2, 3)

    @pytest.mark.parametrize("size,expected", [(1, 1), (2, 1), (3, 2), (5, 3), (8, 4)])
    def test_ceil_extents(self, size, expected):
        assert pool_output_extent(size, 2, 2, ceil_mode=True) == expected

    def test_floor_mode_rejects_small_extent(self):
        with pytest.raises(ShapeError):
            pool_output_extent(1, 2, 2, ceil_mode=False)

    def test_matches_scan_oracle(self, rng):
        x = rng.normal(125).reshape(1, 1, 5, 5, 5)
        y, _ = maxpool3d_forward(x)
        assert np.array_equal(y, maxpool_oracle(x))

    def test_backward_scatters_to_winners(self):
        x = np.arange(8.0).reshape(1, 1, 2, 2, 2)
        y, idx = maxpool3d_forward(x)
        grad = maxpool3d_backward(idx, np.array([3.0]).reshape(y.shape), x.shape)
        assert grad.ravel().tolist() == [0.0] * 7 + [3.0]

    def test_ties_go_to_lowest_index(self):
        layer = MaxPool3d()
        x = np.full((1, 1, 2, 2, 2), 5.0)
        layer.forward(x)
        grad = layer.backward(np.ones((1, 1, 1, 1, 1)))
        assert grad.ravel().tolist() == [1.0] + [0.0] * 7


class TestPointwise:
    def test_relu(self):
        layer = ReLU()
        assert layer.forward(np.array([-1.0, 0.0, 2.0])).tolist() == [0.0, 0.0, 2.0]
        assert layer.backward(np.ones(3)).tolist() == [0.0, 0.0, 1.0]

    def test_sigmoid_midpoint(self):
        assert sigmoid(np.array([0.0]))[0] == 0.5

    def test_softmax_rows_sum_to_one(self, rng):
        p = softmax(rng.normal(20).reshape(10, 2) * 50)
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-6)


class TestBatchNorm:
    def test_training_normalizes(self, rng, f64):
        layer = BatchNorm(3, axis=1)
        x = 4.0 + 3.0 * rng.normal(6 * 3 * 2 * 2 * 2).reshape(6, 3, 2, 2, 2)
        y = layer.forward(x)
        assert np.allclose(y.mean(axis=(0, 2, 3, 4)), 0.0, atol=1e-4)
        assert np.allclose(y.var(axis=(0, 2, 3, 4)), 1.0, atol=1e-4)

    def test_running_stats_update(self, f64):
        layer = BatchNorm(1, axis=1)
        layer.forward(np.array([[1.0], [3.0]]))
        assert layer.buffers["running_mean"][0] == pytest.approx(0.2)
        # unbiased variance of [1, 3] is 2
        assert layer.buffers["running_var"][0] == pytest.approx(0.9 + 0.2)

    def test_batch_of_one_rejected(self):
        with pytest.raises(UsageError):
            BatchNorm(2, axis=1).forward(np.ones((1, 2), dtype=np.float32))

    def test_eval_uses_running_stats(self):
        layer = BatchNorm(2, axis=1).eval()
        x = np.array([[1.0, 2.0]], dtype=np.float32)
        assert np.allclose(layer.forward(x), x / np.sqrt(1.0 + 1e-5))


class TestDropout:
    def test_eval_is_identity(self):
        layer = Dropout(0.5, Rng(1)).eval()
        x = np.ones((4, 4), dtype=np.float32)
        assert layer.forward(x) is x

    def test_inverted_scaling(self):
        layer = Dropout(0.5, Rng(1))
        y = layer.forward(np.ones((50, 50), dtype=np.float32))
        assert set(np.unique(y).tolist()) <= {0.0, 2.0}
        assert 0.3 < float((y > 0).mean()) < 0.7

    def test_backward_uses_mask(self):
        layer = Dropout(0.5, Rng(2))
        y = layer.forward(np.ones((8, 8)))
        assert np.array_equal(layer.backward(np.ones((8, 8))), y)

    def test_invalid_rate(self):
        with pytest.raises(UsageError):
            Dropout(1.0)


class TestLinear:
    def test_shapes_and_bias(self, rng):
        layer = Linear(4, 3, rng)
        layer.params["bias"][...] = 1.0
        y = layer.forward(np.zeros((2, 4), dtype=np.float32))
        assert y.shape == (2, 3)
        assert np.all(y == 1.0)

    def test_gradients_accumulate(self, rng):
        layer = Linear(2, 2, rng)
        x = np.ones((1, 2), dtype=np.float32)
        for _ in range(2):
            layer.forward(x)
            layer.backward(np.ones((1, 2), dtype=np.float32))
        assert np.all(layer.grads["bias"] == 2.0)
        layer.zero_grad()
        assert not layer.grads["bias"].any()


class TestLSTM:
    def test_zero_weights_zero_states(self):
        layer = LSTM(3, 2, None)
        out = layer.forward(np.zeros((2, 4, 3), dtype=np.float32))
        assert not out.any()

    def test_single_step_is_one_cell(self, rng, f64):
        layer = LSTM(2, 3, rng)
        x = rng.normal(2).reshape(1, 1, 2)
        layer.forward(x)
        z = x[0, 0] @ layer.params["w_ih"].T
        i, f, g, o = sigmoid(z[:3]), sigmoid(z[3:6]), np.tanh(z[6:9]), sigmoid(z[9:])
        assert np.allclose(layer.final_hidden[0], o * np.tanh(i * g), atol=1e-12)

    def test_matches_unrolled_oracle(self, rng, f64):
        layer = LSTM(2, 2, rng)
        x = rng.normal(6).reshape(1, 3, 2)
        outputs, h, _ = lstm_sequence(layer.params["w_ih"], layer.params["w_hh"], layer.params["bias"], x)
        oracle = lstm_oracle(layer.params["w_ih"], layer.params["w_hh"], layer.params["bias"], x)
        assert np.max(np.abs(h - oracle)) <= 1e-6
        assert np.array_equal(outputs[:, -1], h)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            LSTM(3, 2, None).forward(np.zeros((1, 2, 4), dtype=np.float32))


class TestStateDict:
    def test_round_trip_in_place(self, rng):
        source, target = Linear(3, 2, rng), Linear(3, 2, Rng(99))
        weight = target.params["weight"]
        target.load_state_dict(source.state_dict())
        assert target.params["weight"] is weight
        assert np.array_equal(weight, source.params["weight"])

    def test_mismatch_reported(self, rng):
        with pytest.raises(UsageError):
            Linear(3, 2, rng).load_state_dict({"weight": np.zeros((2, 3), dtype=np.float32)})
