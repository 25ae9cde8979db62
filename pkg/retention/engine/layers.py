"""
Layer parameters and forward operations.

Every operation accepts an optional leading batch axis:
    conv1d / maxpool1d   [len, ch]  or [batch, len, ch]
    dense / dropout      [d]        or [batch, d]
    lstm / bilstm        [time, d]  or [batch, time, d]
Sequence ops take an optional [batch, time] validity mask for padded
batches; padded steps carry the previous state forward.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from retention.core.errors import (
    DimensionError,
    EmptyBatchError,
    ParameterError,
    SequenceLengthError,
)
from retention.engine.tensor import Tensor, concat, note_branch, stack

logger = logging.getLogger(__name__)

# large negative offset that removes padded steps from a time max
_MASKED = 1e9

RngLike = Union[np.random.Generator, int, None]


class LayerKind(str, Enum):
    CONV1D = "conv1d"
    DENSE = "dense"
    LSTM = "lstm"
    BILSTM = "bilstm"
    BATCHNORM = "batchnorm"


class Mode(str, Enum):
    TRAIN = "train"
    INFER = "infer"


def _glorot(rng: np.random.Generator, shape: tuple, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass
class LayerParams:
    kind: LayerKind
    weights: Dict[str, Tensor]
    hyper: Dict[str, int]
    # non-trainable state (batch-norm running statistics)
    buffers: Dict[str, np.ndarray] = field(default_factory=dict)

    # ── factories ────────────────────────────────────────────
    @classmethod
    def conv1d(cls, in_channels: int, filters: int, width: int, rng: np.random.Generator) -> "LayerParams":
        weight = _glorot(rng, (filters, in_channels, width), in_channels * width, filters * width)
        return cls(
            LayerKind.CONV1D,
            {"weight": Tensor(weight, requires_grad=True), "bias": Tensor(np.zeros(filters), requires_grad=True)},
            {"in_channels": in_channels, "filters": filters, "width": width},
        )

    @classmethod
    def dense(cls, d_in: int, d_out: int, rng: np.random.Generator) -> "LayerParams":
        return cls(
            LayerKind.DENSE,
            {
                "weight": Tensor(_glorot(rng, (d_out, d_in), d_in, d_out), requires_grad=True),
                "bias": Tensor(np.zeros(d_out), requires_grad=True),
            },
            {"d_in": d_in, "units": d_out},
        )

    @staticmethod
    def _lstm_blocks(d_in: int, hidden: int, rng: np.random.Generator) -> tuple:
        # gate order: input, forget, output, candidate
        weight = np.stack(
            [_glorot(rng, (hidden, d_in + hidden), d_in + hidden, hidden) for _ in range(4)]
        )
        bias = np.zeros((4, hidden))
        bias[1] = 1.0
        return Tensor(weight, requires_grad=True), Tensor(bias, requires_grad=True)

    @classmethod
    def lstm(cls, d_in: int, hidden: int, rng: np.random.Generator) -> "LayerParams":
        weight, bias = cls._lstm_blocks(d_in, hidden, rng)
        return cls(LayerKind.LSTM, {"weight": weight, "bias": bias}, {"d_in": d_in, "hidden": hidden})

    @classmethod
    def bilstm(cls, d_in: int, hidden: int, rng: np.random.Generator) -> "LayerParams":
        fw, fb = cls._lstm_blocks(d_in, hidden, rng)
        bw, bb = cls._lstm_blocks(d_in, hidden, rng)
        return cls(
            LayerKind.BILSTM,
            {"forward_weight": fw, "forward_bias": fb, "backward_weight": bw, "backward_bias": bb},
            {"d_in": d_in, "hidden": hidden},
        )

    @classmethod
    def batchnorm(cls, channels: int) -> "LayerParams":
        return cls(
            LayerKind.BATCHNORM,
            {
                "gamma": Tensor(np.ones(channels), requires_grad=True),
                "beta": Tensor(np.zeros(channels), requires_grad=True),
            },
            {"channels": channels},
            {"running_mean": np.zeros(channels), "running_var": np.ones(channels)},
        )

    # ── views ────────────────────────────────────────────────
    def direction(self, which: str) -> "LayerParams":
        """One direction of a bidirectional LSTM, sharing the same tensors."""
        return LayerParams(
            LayerKind.LSTM,
            {"weight": self.weights[f"{which}_weight"], "bias": self.weights[f"{which}_bias"]},
            dict(self.hyper),
        )

    def tensors(self) -> Iterable[Tensor]:
        return self.weights.values()

    def validate(self) -> None:
        """Check the shape invariants for this kind of layer."""
        h = self.hyper
        if self.kind is LayerKind.CONV1D:
            _expect("conv1d weight", (h["filters"], h["in_channels"], h["width"]), self.weights["weight"].shape)
            _expect("conv1d bias", (h["filters"],), self.weights["bias"].shape)
        elif self.kind is LayerKind.DENSE:
            _expect("dense weight", (h["units"], h["d_in"]), self.weights["weight"].shape)
            _expect("dense bias", (h["units"],), self.weights["bias"].shape)
        elif self.kind in (LayerKind.LSTM, LayerKind.BILSTM):
            prefixes = [""] if self.kind is LayerKind.LSTM else ["forward_", "backward_"]
            for p in prefixes:
                _expect(f"{p}lstm weight", (4, h["hidden"], h["d_in"] + h["hidden"]), self.weights[f"{p}weight"].shape)
                _expect(f"{p}lstm bias", (4, h["hidden"]), self.weights[f"{p}bias"].shape)
        elif self.kind is LayerKind.BATCHNORM:
            c = h["channels"]
            for name in ("gamma", "beta"):
                _expect(f"batchnorm {name}", (c,), self.weights[name].shape)
            for name in ("running_mean", "running_var"):
                _expect(f"batchnorm {name}", (c,), self.buffers[name].shape)
            if np.any(self.buffers["running_var"] < 0):
                raise ParameterError("batchnorm running variance must be non-negative")


def _expect(what: str, expected: Sequence[int], actual: Sequence[int]) -> None:
    if tuple(expected) != tuple(actual):
        raise DimensionError(what, expected, actual)


def _as_rng(rng: RngLike) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


# ── activations ──────────────────────────────────────────────
def activate(x: Tensor, activation: str) -> Tensor:
    if activation == "relu":
        return x.relu()
    if activation == "tanh":
        return x.tanh()
    if activation == "sigmoid":
        return x.sigmoid()
    if activation == "identity":
        return x
    raise ParameterError(f"unknown activation {activation!r}")


# ── conv1d ───────────────────────────────────────────────────
def conv1d_forward(x: Tensor, params: LayerParams, padding: str = "same") -> Tensor:
    """Cross-correlation of every filter along the length axis, plus bias."""
    weight, bias = params.weights["weight"], params.weights["bias"]
    filters, in_channels, width = weight.shape
    single = x.ndim == 2
    data = x.data[None] if single else x.data
    if data.ndim != 3 or data.shape[-1] != in_channels:
        expected_len = x.shape[-2] if x.ndim >= 2 else 1
        raise DimensionError("conv1d input", [expected_len, in_channels], x.shape)
    length = data.shape[1]

    if padding == "same":
        left = (width - 1) // 2
        right = width - 1 - left
    elif padding == "valid":
        if length < width:
            raise DimensionError("conv1d input length (valid padding)", [width, in_channels], x.shape)
        left = right = 0
    else:
        raise ParameterError(f"unknown padding {padding!r}")

    padded = np.pad(data, ((0, 0), (left, right), (0, 0)))
    windows = sliding_window_view(padded, width, axis=1)  # [B, L', C, K]
    out_len = windows.shape[1]
    out = np.einsum("blck,fck->blf", windows, weight.data) + bias.data

    def backward(g):
        g3 = g[None] if single else g
        g_weight = np.einsum("blck,blf->fck", windows, g3)
        g_bias = g3.sum(axis=(0, 1))
        g_windows = np.einsum("blf,fck->blck", g3, weight.data)
        g_padded = np.zeros_like(padded)
        for k in range(width):
            g_padded[:, k:k + out_len, :] += g_windows[..., k]
        g_x = g_padded[:, left:left + length, :]
        return (g_x[0] if single else g_x), g_weight, g_bias

    return Tensor.from_op(out[0] if single else out, (x, weight, bias), backward)


# ── maxpool1d ────────────────────────────────────────────────
def maxpool1d_forward(x: Tensor, window: int = 2, stride: int = 2) -> Tensor:
    single = x.ndim == 2
    data = x.data[None] if single else x.data
    length = data.shape[1]
    if window > length:
        raise DimensionError("maxpool1d input length", [window, data.shape[-1]], x.shape)

    windows = sliding_window_view(data, window, axis=1)[:, ::stride]  # [B, Lo, C, W]
    argmax = windows.argmax(axis=-1)
    note_branch(argmax)
    out = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]
    batch, out_len, channels = out.shape
    rows = np.arange(batch)[:, None, None]
    positions = np.arange(out_len)[None, :, None] * stride + argmax
    cols = np.arange(channels)[None, None, :]

    def backward(g):
        g3 = g[None] if single else g
        full = np.zeros_like(data)
        np.add.at(full, (rows, positions, cols), g3)
        return (full[0] if single else full,)

    return Tensor.from_op(out[0] if single else out, (x,), backward)


# ── batch norm ───────────────────────────────────────────────
def batchnorm_forward(
    x: Tensor,
    params: LayerParams,
    mode: Mode | str = Mode.TRAIN,
    epsilon: float = 1e-5,
    momentum: float = 0.9,
    mask: Optional[np.ndarray] = None,
) -> Tensor:
    """
    Normalise over every axis but the last (channels).
    `mask`, shaped like x without its channel axis, excludes padded rows
    from the batch statistics.
    """
    mode = Mode(mode)
    gamma, beta = params.weights["gamma"], params.weights["beta"]
    channels = gamma.shape[0]
    if x.shape[-1] != channels:
        raise DimensionError("batchnorm input channels", [channels], [x.shape[-1]])
    if x.ndim == 1:
        return batchnorm_forward(
            x.reshape(1, channels), params, mode, epsilon, momentum,
            None if mask is None else np.asarray(mask).reshape(1),
        ).reshape(channels)

    if mode is Mode.INFER:
        mean = params.buffers["running_mean"]
        var = params.buffers["running_var"]
        normalised = (x - mean) * (1.0 / np.sqrt(var + epsilon))
        return normalised * gamma + beta

    axes = tuple(range(x.ndim - 1))
    if mask is None:
        count = float(np.prod(x.shape[:-1]))
        if count == 0:
            raise EmptyBatchError("batchnorm in train mode received an empty batch")
        mean = x.sum(axis=axes, keepdims=True) * (1.0 / count)
        centred = x - mean
        var = (centred * centred).sum(axis=axes, keepdims=True) * (1.0 / count)
    else:
        weights = np.asarray(mask, dtype=np.float64)[..., None]
        count = float(weights.sum())
        if count == 0:
            raise EmptyBatchError("batchnorm in train mode received a batch with no valid rows")
        mean = (x * weights).sum(axis=axes, keepdims=True) * (1.0 / count)
        centred = x - mean
        var = (centred * centred * weights).sum(axis=axes, keepdims=True) * (1.0 / count)

    normalised = centred / (var + epsilon).sqrt()

    buffers = params.buffers
    buffers["running_mean"] = momentum * buffers["running_mean"] + (1.0 - momentum) * mean.data.reshape(channels)
    buffers["running_var"] = momentum * buffers["running_var"] + (1.0 - momentum) * var.data.reshape(channels)
    return normalised * gamma + beta


# ── dense ────────────────────────────────────────────────────
def dense_forward(x: Tensor, params: LayerParams, activation: str = "identity") -> Tensor:
    weight, bias = params.weights["weight"], params.weights["bias"]
    if x.shape[-1] != weight.shape[1]:
        raise DimensionError("dense input", [weight.shape[1]], [x.shape[-1]])
    return activate(x @ weight.T + bias, activation)


# ── dropout ──────────────────────────────────────────────────
def dropout_forward(x: Tensor, rate: float, mode: Mode | str = Mode.TRAIN, rng: RngLike = None) -> Tensor:
    """Inverted dropout; identity in infer mode."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must lie in [0, 1), got {rate}")
    if Mode(mode) is Mode.INFER or rate == 0.0:
        return x
    keep = _as_rng(rng).random(x.shape) >= rate
    return x * (keep / (1.0 - rate))


# ── lstm ─────────────────────────────────────────────────────
def _as_sequence(x: Union[Tensor, Sequence[Tensor]]) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if len(x) == 0:
        raise SequenceLengthError("LSTM input sequence is empty")
    return stack(list(x), axis=-2)


def lstm_forward(
    x: Union[Tensor, Sequence[Tensor]],
    params: LayerParams,
    hidden: Optional[int] = None,
    mask: Optional[np.ndarray] = None,
    reverse: bool = False,
) -> Tensor:
    """
    Zero-initialised LSTM over the time axis; returns every hidden state.
    With `reverse`, steps run from the last position to the first.
    """
    x = _as_sequence(x)
    weight, bias = params.weights["weight"], params.weights["bias"]
    _, h_dim, in_plus_h = weight.shape
    if hidden is not None and hidden != h_dim:
        raise DimensionError("lstm hidden size", [h_dim], [hidden])
    single = x.ndim == 2
    if single:
        x = x.reshape(1, *x.shape)
        if mask is not None:
            mask = np.asarray(mask).reshape(1, -1)
    batch, steps, d_in = x.shape
    if steps == 0:
        raise SequenceLengthError("LSTM input sequence is empty")
    if d_in + h_dim != in_plus_h:
        raise DimensionError("lstm input", [steps, in_plus_h - h_dim], [steps, d_in])

    w = weight.reshape(4 * h_dim, in_plus_h).T
    b = bias.reshape(4 * h_dim)
    h = Tensor(np.zeros((batch, h_dim)))
    c = Tensor(np.zeros((batch, h_dim)))
    outputs: list = [None] * steps
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        gates = concat([x[:, t, :], h], axis=-1) @ w + b
        i = gates[:, 0:h_dim].sigmoid()
        f = gates[:, h_dim:2 * h_dim].sigmoid()
        o = gates[:, 2 * h_dim:3 * h_dim].sigmoid()
        g = gates[:, 3 * h_dim:].tanh()
        c_new = f * c + i * g
        h_new = o * c_new.tanh()
        if mask is None:
            c, h = c_new, h_new
        else:
            valid = np.asarray(mask[:, t:t + 1], dtype=np.float64)
            c = c_new * valid + c * (1.0 - valid)
            h = h_new * valid + h * (1.0 - valid)
        outputs[t] = h

    out = stack(outputs, axis=1)
    return out[0] if single else out


def bilstm_states(
    x: Union[Tensor, Sequence[Tensor]],
    params: LayerParams,
    hidden: Optional[int] = None,
    mask: Optional[np.ndarray] = None,
) -> Tensor:
    """Per-step [forward ‖ backward] hidden states, width 2·hidden."""
    forward = lstm_forward(x, params.direction("forward"), hidden, mask)
    backward = lstm_forward(x, params.direction("backward"), hidden, mask, reverse=True)
    return concat([forward, backward], axis=-1)


def bilstm_maxpool_forward(
    x: Union[Tensor, Sequence[Tensor]],
    params: LayerParams,
    hidden: Optional[int] = None,
    mask: Optional[np.ndarray] = None,
) -> Tensor:
    """BiLSTM followed by an element-wise max over valid time steps."""
    states = bilstm_states(x, params, hidden, mask)
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64)
        if states.ndim == 2:
            mask = mask.reshape(-1)
        states = states + (mask[..., None] - 1.0) * _MASKED
    return states.max(axis=-2)
