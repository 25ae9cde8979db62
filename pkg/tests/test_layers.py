"""
Tests for retention/engine/layers.py: shapes, contracts and the
finite-difference gradient suite for every layer.
"""
import numpy as np
import pytest

from retention.core.errors import DimensionError, EmptyBatchError, ParameterError, SequenceLengthError
from retention.engine.gradcheck import check_gradients
from retention.engine.layers import (
    LayerParams,
    Mode,
    batchnorm_forward,
    bilstm_maxpool_forward,
    bilstm_states,
    conv1d_forward,
    dense_forward,
    dropout_forward,
    lstm_forward,
    maxpool1d_forward,
)
from retention.engine.tensor import Tensor

SEEDS = [0, 1, 2]
TOLERANCE = 1e-3


def _readout(out: Tensor, seed: int) -> Tensor:
    """Random linear readout so every output coordinate matters."""
    r = np.random.default_rng(seed + 100).normal(size=out.shape)
    return (out * r).sum()


def _params(layer: LayerParams, x: Tensor) -> dict:
    return {"x": x, **{name: t for name, t in layer.weights.items()}}


class TestConv1d:
    def test_same_padding_keeps_length(self, rng):
        layer = LayerParams.conv1d(1, 8, 11, rng)
        out = conv1d_forward(Tensor(rng.normal(size=(120, 1))), layer)
        assert out.shape == (120, 8)

    def test_valid_padding_shrinks(self, rng):
        layer = LayerParams.conv1d(2, 3, 5, rng)
        out = conv1d_forward(Tensor(rng.normal(size=(4, 10, 2))), layer, padding="valid")
        assert out.shape == (4, 6, 3)

    def test_matches_direct_correlation(self, rng):
        layer = LayerParams.conv1d(2, 1, 3, rng)
        x = rng.normal(size=(6, 2))
        out = conv1d_forward(Tensor(x), layer, padding="valid").data
        w, b = layer.weights["weight"].data[0], layer.weights["bias"].data[0]
        expected = [np.sum(x[i:i + 3].T * w) + b for i in range(4)]
        np.testing.assert_allclose(out[:, 0], expected)

    def test_channel_mismatch(self, rng):
        layer = LayerParams.conv1d(2, 3, 3, rng)
        with pytest.raises(DimensionError):
            conv1d_forward(Tensor(rng.normal(size=(10, 1))), layer)

    @pytest.mark.parametrize("seed", SEEDS)
    @pytest.mark.parametrize("padding", ["same", "valid"])
    def test_gradients(self, seed, padding):
        rng = np.random.default_rng(seed)
        layer = LayerParams.conv1d(2, 3, 4, rng)
        x = Tensor(rng.normal(size=(2, 9, 2)), requires_grad=True)
        loss = lambda: _readout(conv1d_forward(x, layer, padding), seed)
        assert check_gradients(loss, _params(layer, x)).max_rel_error <= TOLERANCE


class TestMaxPool:
    def test_halves_length(self, rng):
        assert maxpool1d_forward(Tensor(rng.normal(size=(3, 120, 8)))).shape == (3, 60, 8)

    def test_picks_window_max(self):
        x = Tensor(np.array([[1.0], [3.0], [2.0], [0.0]]))
        np.testing.assert_array_equal(maxpool1d_forward(x).data[:, 0], [3.0, 2.0])

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients(self, seed):
        rng = np.random.default_rng(seed)
        x = Tensor(rng.normal(size=(2, 8, 3)), requires_grad=True)
        loss = lambda: _readout(maxpool1d_forward(x), seed)
        assert check_gradients(loss, {"x": x}).max_rel_error <= TOLERANCE


class TestBatchNorm:
    def test_train_normalises_batch(self, rng):
        layer = LayerParams.batchnorm(4)
        out = batchnorm_forward(Tensor(rng.normal(3.0, 2.0, size=(64, 4))), layer, Mode.TRAIN)
        np.testing.assert_allclose(out.data.mean(axis=0), 0.0, atol=1e-10)
        np.testing.assert_allclose(out.data.std(axis=0), 1.0, atol=1e-3)

    def test_running_statistics_update(self):
        layer = LayerParams.batchnorm(2)
        x = np.array([[1.0, 2.0], [3.0, 6.0]])
        batchnorm_forward(Tensor(x), layer, Mode.TRAIN, momentum=0.9)
        np.testing.assert_allclose(layer.buffers["running_mean"], [0.2, 0.4])
        np.testing.assert_allclose(layer.buffers["running_var"], [0.9 + 0.1 * 1.0, 0.9 + 0.1 * 4.0])

    def test_infer_uses_running_statistics(self):
        layer = LayerParams.batchnorm(2)
        layer.buffers["running_mean"] = np.array([1.0, -1.0])
        layer.buffers["running_var"] = np.array([4.0, 1.0])
        out = batchnorm_forward(Tensor([3.0, 0.0]), layer, Mode.INFER, epsilon=0.0)
        np.testing.assert_allclose(out.data, [1.0, 1.0])

    def test_mask_excludes_padded_rows(self, rng):
        layer = LayerParams.batchnorm(3)
        x = rng.normal(size=(2, 4, 3))
        mask = np.array([[1, 1, 0, 0], [1, 1, 1, 0]])
        padded = x.copy()
        padded[mask == 0] = 1e6
        masked = batchnorm_forward(Tensor(padded), layer, Mode.TRAIN, mask=mask).data[mask == 1]
        plain = batchnorm_forward(Tensor(x[mask == 1]), LayerParams.batchnorm(3), Mode.TRAIN).data
        np.testing.assert_allclose(masked, plain)

    def test_empty_batch(self):
        with pytest.raises(EmptyBatchError):
            batchnorm_forward(Tensor(np.zeros((0, 3))), LayerParams.batchnorm(3), Mode.TRAIN)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients(self, seed):
        rng = np.random.default_rng(seed)
        layer = LayerParams.batchnorm(3)
        layer.weights["gamma"].data[:] = rng.uniform(0.5, 1.5, size=3)
        x = Tensor(rng.normal(size=(5, 4, 3)), requires_grad=True)
        mask = (rng.random(size=(5, 4)) > 0.3).astype(float)
        mask[:, 0] = 1.0
        loss = lambda: _readout(batchnorm_forward(x, layer, Mode.TRAIN, mask=mask), seed)
        assert check_gradients(loss, _params(layer, x)).max_rel_error <= TOLERANCE


class TestDenseAndDropout:
    @pytest.mark.parametrize("seed", SEEDS)
    @pytest.mark.parametrize("activation", ["identity", "tanh", "sigmoid"])
    def test_dense_gradients(self, seed, activation):
        rng = np.random.default_rng(seed)
        layer = LayerParams.dense(6, 4, rng)
        x = Tensor(rng.normal(size=(3, 6)), requires_grad=True)
        loss = lambda: _readout(dense_forward(x, layer, activation), seed)
        assert check_gradients(loss, _params(layer, x)).max_rel_error <= TOLERANCE

    def test_dense_input_mismatch(self, rng):
        with pytest.raises(DimensionError):
            dense_forward(Tensor(np.ones(5)), LayerParams.dense(6, 2, rng))

    def test_dropout_infer_is_identity(self, rng):
        x = Tensor(rng.normal(size=(4, 5)))
        assert dropout_forward(x, 0.5, Mode.INFER) is x

    def test_dropout_train_is_inverted(self):
        x = Tensor(np.ones((200, 50)))
        out = dropout_forward(x, 0.25, Mode.TRAIN, rng=0).data
        assert set(np.unique(out)) <= {0.0, 1.0 / 0.75}
        assert abs(out.mean() - 1.0) < 0.05

    def test_dropout_rate_range(self):
        with pytest.raises(ParameterError):
            dropout_forward(Tensor(np.ones(3)), 1.0)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_dropout_gradients_with_fixed_mask(self, seed):
        rng = np.random.default_rng(seed)
        x = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
        loss = lambda: _readout(dropout_forward(x, 0.3, Mode.TRAIN, rng=seed), seed)
        assert check_gradients(loss, {"x": x}).max_rel_error <= TOLERANCE


class TestLstm:
    def test_output_shapes(self, rng):
        layer = LayerParams.lstm(20, 75, rng)
        assert lstm_forward(Tensor(rng.normal(size=(7, 20))), layer).shape == (7, 75)
        assert lstm_forward(Tensor(rng.normal(size=(3, 7, 20))), layer).shape == (3, 7, 75)

    def test_forget_bias_is_one(self, rng):
        bias = LayerParams.lstm(4, 5, rng).weights["bias"].data
        np.testing.assert_array_equal(bias[1], np.ones(5))
        np.testing.assert_array_equal(bias[[0, 2, 3]], np.zeros((3, 5)))

    def test_list_input_matches_stacked(self, rng):
        layer = LayerParams.lstm(3, 4, rng)
        steps = [Tensor(rng.normal(size=3)) for _ in range(5)]
        stacked = Tensor(np.stack([s.data for s in steps]))
        np.testing.assert_allclose(lstm_forward(steps, layer).data, lstm_forward(stacked, layer).data)

    def test_empty_sequence(self, rng):
        layer = LayerParams.lstm(3, 4, rng)
        with pytest.raises(SequenceLengthError):
            lstm_forward([], layer)
        with pytest.raises(SequenceLengthError):
            lstm_forward(Tensor(np.zeros((0, 3))), layer)

    def test_hidden_size_checked(self, rng):
        with pytest.raises(DimensionError):
            lstm_forward(Tensor(np.ones((2, 3))), LayerParams.lstm(3, 4, rng), hidden=5)

    def test_masked_steps_carry_state(self, rng):
        layer = LayerParams.lstm(3, 4, rng)
        x = rng.normal(size=(1, 5, 3))
        mask = np.array([[1, 1, 1, 0, 0]])
        padded = lstm_forward(Tensor(x), layer, mask=mask).data
        plain = lstm_forward(Tensor(x[0, :3]), layer).data
        np.testing.assert_allclose(padded[0, -1], plain[-1])

    def test_order_sensitive(self, rng):
        layer = LayerParams.lstm(3, 4, rng)
        x = rng.normal(size=(4, 3))
        forward = lstm_forward(Tensor(x), layer).data[-1]
        backward = lstm_forward(Tensor(x[::-1].copy()), layer).data[-1]
        assert not np.allclose(forward, backward)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients(self, seed):
        rng = np.random.default_rng(seed)
        layer = LayerParams.lstm(3, 4, rng)
        x = Tensor(rng.normal(size=(2, 4, 3)), requires_grad=True)
        mask = np.array([[1, 1, 1, 1], [1, 1, 0, 0]])
        loss = lambda: _readout(lstm_forward(x, layer, mask=mask), seed)
        assert check_gradients(loss, _params(layer, x)).max_rel_error <= TOLERANCE


class TestBiLstm:
    def test_state_width(self, rng):
        layer = LayerParams.bilstm(5, 3, rng)
        assert bilstm_states(Tensor(rng.normal(size=(4, 5))), layer).shape == (4, 6)
        assert bilstm_maxpool_forward(Tensor(rng.normal(size=(2, 4, 5))), layer).shape == (2, 6)

    def test_mask_matches_unpadded(self, rng):
        layer = LayerParams.bilstm(5, 3, rng)
        x = rng.normal(size=(1, 6, 5))
        mask = np.array([[1, 1, 1, 1, 0, 0]])
        padded = bilstm_maxpool_forward(Tensor(x), layer, mask=mask).data[0]
        plain = bilstm_maxpool_forward(Tensor(x[0, :4]), layer).data
        np.testing.assert_allclose(padded, plain)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_maxpool_gradients(self, seed):
        rng = np.random.default_rng(seed)
        layer = LayerParams.bilstm(4, 3, rng)
        x = Tensor(rng.normal(size=(2, 5, 4)), requires_grad=True)
        mask = np.array([[1, 1, 1, 1, 1], [1, 1, 1, 0, 0]])
        loss = lambda: _readout(bilstm_maxpool_forward(x, layer, mask=mask), seed)
        assert check_gradients(loss, _params(layer, x)).max_rel_error <= TOLERANCE
