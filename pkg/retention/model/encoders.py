"""
Modality encoders and fusion.

    static    one-hot [120] → 3×(conv → bn → act → pool → dropout) → dense(50, tanh)
    temporal  [T, 20] → LSTM(75) → dropout → bn → LSTM(55) → dropout → bn
              → last state → dense(50) → dropout → bn → act → dense(40, tanh)
    notes     [N, dim] → BiLSTM(hidden_note) → max over notes,
              or a trainable default vector when there are no notes

z = [z_temporal ‖ z_static ‖ z_note], always in that order.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from retention.core.errors import DimensionError
from retention.data.schema import PERFORMANCE_WIDTH, STATIC_WIDTH
from retention.engine.layers import (
    LayerParams,
    Mode,
    activate,
    batchnorm_forward,
    bilstm_maxpool_forward,
    conv1d_forward,
    dense_forward,
    dropout_forward,
    lstm_forward,
    maxpool1d_forward,
)
from retention.engine.tensor import Tensor, as_tensor, concat

logger = logging.getLogger(__name__)

STATIC_OUT = 50
TEMPORAL_OUT = 40
# (filters, width) of the three convolution blocks
STATIC_CONVS = [(8, 11), (16, 5), (32, 3)]
TEMPORAL_LSTMS = [75, 55]
TEMPORAL_DENSE = 50


@dataclass
class ForwardContext:
    """Per-pass settings shared by every layer."""

    mode: Mode = Mode.TRAIN
    dropout_rate: float = 0.2
    activation: str = "relu"
    bn_epsilon: float = 1e-5
    bn_momentum: float = 0.9
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    @classmethod
    def from_dims(cls, dims, mode: Mode | str, rng: Optional[np.random.Generator] = None) -> "ForwardContext":
        return cls(
            mode=Mode(mode),
            dropout_rate=dims.dropout_rate,
            activation=dims.activation,
            bn_epsilon=dims.bn_epsilon,
            bn_momentum=dims.bn_momentum,
            rng=rng if rng is not None else np.random.default_rng(0),
        )

    def dropout(self, x: Tensor) -> Tensor:
        return dropout_forward(x, self.dropout_rate, self.mode, self.rng)

    def batchnorm(self, x: Tensor, params: LayerParams, mask: Optional[np.ndarray] = None) -> Tensor:
        return batchnorm_forward(x, params, self.mode, self.bn_epsilon, self.bn_momentum, mask)


# ── static ───────────────────────────────────────────────────
@dataclass
class StaticEncoderParams:
    convs: List[LayerParams]
    norms: List[LayerParams]
    dense: LayerParams

    @classmethod
    def init(cls, rng: np.random.Generator) -> "StaticEncoderParams":
        convs, norms = [], []
        channels, length = 1, STATIC_WIDTH
        for filters, width in STATIC_CONVS:
            convs.append(LayerParams.conv1d(channels, filters, width, rng))
            norms.append(LayerParams.batchnorm(filters))
            channels, length = filters, length // 2
        return cls(convs, norms, LayerParams.dense(length * channels, STATIC_OUT, rng))

    def named_layers(self) -> Dict[str, LayerParams]:
        layers = {}
        for i, (conv, norm) in enumerate(zip(self.convs, self.norms), start=1):
            layers[f"conv{i}"] = conv
            layers[f"bn{i}"] = norm
        layers["dense"] = self.dense
        return layers


def encode_static(x: Tensor | np.ndarray, params: StaticEncoderParams, ctx: ForwardContext) -> Tensor:
    """[120] or [B, 120] → [50] or [B, 50]."""
    x = as_tensor(x)
    if x.shape[-1] != STATIC_WIDTH or x.ndim not in (1, 2):
        raise DimensionError("static input", [STATIC_WIDTH], list(x.shape))
    single = x.ndim == 1
    h = x.reshape(1 if single else x.shape[0], STATIC_WIDTH, 1)
    for conv, norm in zip(params.convs, params.norms):
        h = conv1d_forward(h, conv, padding="same")
        h = activate(ctx.batchnorm(h, norm), ctx.activation)
        h = maxpool1d_forward(h, window=2, stride=2)
        h = ctx.dropout(h)
    h = h.reshape(h.shape[0], -1)
    out = dense_forward(h, params.dense, "tanh")
    return out.reshape(STATIC_OUT) if single else out


# ── temporal ─────────────────────────────────────────────────
@dataclass
class TemporalEncoderParams:
    lstm1: LayerParams
    bn1: LayerParams
    lstm2: LayerParams
    bn2: LayerParams
    dense1: LayerParams
    bn3: LayerParams
    dense2: LayerParams

    @classmethod
    def init(cls, rng: np.random.Generator) -> "TemporalEncoderParams":
        h1, h2 = TEMPORAL_LSTMS
        return cls(
            lstm1=LayerParams.lstm(PERFORMANCE_WIDTH, h1, rng),
            bn1=LayerParams.batchnorm(h1),
            lstm2=LayerParams.lstm(h1, h2, rng),
            bn2=LayerParams.batchnorm(h2),
            dense1=LayerParams.dense(h2, TEMPORAL_DENSE, rng),
            bn3=LayerParams.batchnorm(TEMPORAL_DENSE),
            dense2=LayerParams.dense(TEMPORAL_DENSE, TEMPORAL_OUT, rng),
        )

    def named_layers(self) -> Dict[str, LayerParams]:
        return dict(vars(self))


def encode_temporal(
    x: Tensor | np.ndarray,
    params: TemporalEncoderParams,
    ctx: ForwardContext,
    mask: Optional[np.ndarray] = None,
) -> Tensor:
    """[T, 20] or [B, T, 20] (with optional [B, T] mask) → [40] or [B, 40]."""
    x = as_tensor(x)
    if x.shape[-1] != PERFORMANCE_WIDTH or x.ndim not in (2, 3):
        raise DimensionError("performance input", [PERFORMANCE_WIDTH], list(x.shape))
    single = x.ndim == 2
    if single:
        x = x.reshape(1, *x.shape)
        mask = None if mask is None else np.asarray(mask).reshape(1, -1)

    h = lstm_forward(x, params.lstm1, mask=mask)
    h = ctx.batchnorm(ctx.dropout(h), params.bn1, mask)
    h = lstm_forward(h, params.lstm2, mask=mask)
    h = ctx.batchnorm(ctx.dropout(h), params.bn2, mask)
    # padded steps carry the state, so the last position holds the last valid state
    last = h[:, -1, :]
    d = ctx.dropout(dense_forward(last, params.dense1))
    d = activate(ctx.batchnorm(d, params.bn3), ctx.activation)
    out = dense_forward(d, params.dense2, "tanh")
    return out.reshape(TEMPORAL_OUT) if single else out


# ── notes ────────────────────────────────────────────────────
@dataclass
class NoteEncoderParams:
    bilstm: LayerParams
    default: Tensor
    hidden: int

    @classmethod
    def init(cls, note_dim: int, hidden: int, rng: np.random.Generator) -> "NoteEncoderParams":
        return cls(
            bilstm=LayerParams.bilstm(note_dim, hidden, rng),
            default=Tensor(np.zeros(2 * hidden), requires_grad=True, name="notes.default"),
            hidden=hidden,
        )

    @property
    def out_dim(self) -> int:
        return 2 * self.hidden

    def named_layers(self) -> Dict[str, LayerParams]:
        return {"bilstm": self.bilstm}


def encode_notes(
    x: Tensor | np.ndarray,
    params: NoteEncoderParams,
    mask: Optional[np.ndarray] = None,
) -> Tensor:
    """
    [N, dim] or [B, N, dim] (with optional [B, N] mask) → [2·hidden] or
    [B, 2·hidden]. Rows without any valid note get the default vector.
    """
    x = as_tensor(x)
    if x.ndim == 2 and x.shape[0] == 0:
        return params.default
    single = x.ndim == 2
    if single:
        x = x.reshape(1, *x.shape)
        mask = None if mask is None else np.asarray(mask).reshape(1, -1)
    if mask is None:
        mask = np.ones(x.shape[:2])

    has = np.asarray(mask, dtype=np.float64).max(axis=1, keepdims=True)
    if not has.any():
        pooled = params.default * np.ones((x.shape[0], 1))
    else:
        pooled = bilstm_maxpool_forward(x, params.bilstm, params.hidden, mask)
        pooled = pooled * has + params.default * (1.0 - has)
    return pooled.reshape(params.out_dim) if single else pooled


# ── fusion ───────────────────────────────────────────────────
def fuse(z_temporal: Tensor, z_static: Tensor, z_note: Tensor, note_dim: Optional[int] = None) -> Tensor:
    """Concatenate [z_temporal ‖ z_static ‖ z_note] along the last axis."""
    if z_temporal.shape[-1] != TEMPORAL_OUT:
        raise DimensionError("z_temporal", [TEMPORAL_OUT], [z_temporal.shape[-1]])
    if z_static.shape[-1] != STATIC_OUT:
        raise DimensionError("z_static", [STATIC_OUT], [z_static.shape[-1]])
    if note_dim is not None and z_note.shape[-1] != note_dim:
        raise DimensionError("z_note", [note_dim], [z_note.shape[-1]])
    return concat([z_temporal, z_static, z_note], axis=-1)


def fused_dim(hidden_note: int) -> int:
    return TEMPORAL_OUT + STATIC_OUT + 2 * hidden_note
