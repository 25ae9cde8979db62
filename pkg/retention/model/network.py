"""
The full network: three encoders, fusion and the cascade heads, with
named parameters for checkpoints.

Parameter names are dotted paths, e.g. `static.conv1.weight`,
`temporal.lstm2.bias`, `notes.bilstm.forward_weight`, `notes.default`,
`heads.cd.output.weight`. Batch-norm running statistics are stored next
to their layer as `<layer>.running_mean` / `<layer>.running_var`.
"""
import logging
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from retention.core.config import ModelDims
from retention.core.errors import DimensionError, FormatError
from retention.data.batching import Batch
from retention.engine.checkpoint import load_checkpoint, save_checkpoint
from retention.engine.layers import LayerParams
from retention.engine.tensor import Tensor
from retention.model.encoders import (
    STATIC_OUT,
    TEMPORAL_OUT,
    ForwardContext,
    NoteEncoderParams,
    StaticEncoderParams,
    TemporalEncoderParams,
    encode_notes,
    encode_static,
    encode_temporal,
    fuse,
    fused_dim,
)
from retention.model.heads import CascadeParams, TaskOutputs, cascade_forward

logger = logging.getLogger(__name__)


class RetentionNetwork:
    def __init__(self, dims: ModelDims, note_dim: int, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.dims = dims
        self.note_dim = note_dim
        self.static = StaticEncoderParams.init(rng)
        self.temporal = TemporalEncoderParams.init(rng)
        self.notes = NoteEncoderParams.init(note_dim, dims.hidden_note, rng)
        self.heads = CascadeParams.init(fused_dim(dims.hidden_note), dims.head_width, rng)

    # ── parameters ───────────────────────────────────────────
    def named_layers(self) -> Dict[str, LayerParams]:
        layers: Dict[str, LayerParams] = {}
        for prefix, part in (
            ("static", self.static),
            ("temporal", self.temporal),
            ("notes", self.notes),
            ("heads", self.heads),
        ):
            for name, layer in part.named_layers().items():
                layers[f"{prefix}.{name}"] = layer
        return layers

    def parameters(self) -> Dict[str, Tensor]:
        params = {
            f"{layer_name}.{name}": tensor
            for layer_name, layer in self.named_layers().items()
            for name, tensor in layer.weights.items()
        }
        params["notes.default"] = self.notes.default
        return params

    def trainable(self) -> Dict[str, Tensor]:
        """Parameters of the enabled modalities plus the heads."""
        enabled = set(self.dims.modalities) | {"heads"}
        return {name: p for name, p in self.parameters().items() if name.split(".")[0] in enabled}

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.parameters().items()}
        for layer_name, layer in self.named_layers().items():
            for name, buffer in layer.buffers.items():
                state[f"{layer_name}.{name}"] = buffer.copy()
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        expected = self.state_dict()
        missing = sorted(expected.keys() - state.keys())
        if missing:
            error = DimensionError(
                "checkpoint arrays",
                len(expected),
                len(expected) - len(missing),
                message=f"checkpoint is missing {len(missing)} arrays: {', '.join(missing[:5])}",
            )
            error.detail["missing"] = missing
            raise error
        params = self.parameters()
        layers = self.named_layers()
        for name, target in expected.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != target.shape:
                raise DimensionError(f"checkpoint array {name}", list(target.shape), list(value.shape))
            if name in params:
                params[name].data[...] = value
            else:
                layer_name, buffer = name.rsplit(".", 1)
                layers[layer_name].buffers[buffer] = value.copy()

    def check_note_dim(self, dim: int) -> None:
        if dim != self.note_dim:
            raise DimensionError("note embeddings", [self.note_dim], [dim])

    # ── forward ──────────────────────────────────────────────
    def encode(self, batch: Batch, ctx: ForwardContext) -> Tensor:
        """Fused representation [B, |z|]; disabled modalities give zero blocks."""
        size = len(batch)
        enabled = self.dims.modalities
        if "temporal" in enabled:
            z_temporal = encode_temporal(batch.performance, self.temporal, ctx, batch.performance_mask)
        else:
            z_temporal = Tensor(np.zeros((size, TEMPORAL_OUT)))
        if "static" in enabled:
            z_static = encode_static(batch.static, self.static, ctx)
        else:
            z_static = Tensor(np.zeros((size, STATIC_OUT)))
        if "notes" in enabled:
            self.check_note_dim(batch.notes.shape[-1])
            z_note = encode_notes(batch.notes, self.notes, batch.note_mask)
        else:
            z_note = Tensor(np.zeros((size, self.notes.out_dim)))
        return fuse(z_temporal, z_static, z_note, self.notes.out_dim)

    def forward(self, batch: Batch, ctx: ForwardContext) -> Tuple[Tensor, TaskOutputs]:
        z = self.encode(batch, ctx)
        return z, cascade_forward(z, self.heads)

    # ── checkpoints ──────────────────────────────────────────
    def save(self, path: str | Path, meta: dict | None = None) -> Path:
        document = {
            "dims": self.dims.model_dump(mode="json"),
            "note_dim": self.note_dim,
            **(meta or {}),
        }
        return save_checkpoint(path, self.state_dict(), document)

    @classmethod
    def load(cls, path: str | Path) -> Tuple["RetentionNetwork", dict]:
        arrays, meta = load_checkpoint(path)
        if "dims" not in meta or "note_dim" not in meta:
            raise FormatError(f"{path} is not a network checkpoint (no dims in metadata)")
        network = cls(ModelDims.model_validate(meta["dims"]), int(meta["note_dim"]))
        network.load_state_dict(arrays)
        return network, meta

