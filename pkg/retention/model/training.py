"""
Mini-batch SGD on the masked multi-task loss.

Batches are drawn from a per-epoch permutation; every random choice
(batch order, dropout masks) comes from generators seeded by the run
seed, so two runs with the same seed produce identical loss traces.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from retention.core.config import FairnessConfig, ScheduleConfig
from retention.core.errors import ParameterError, TrainingDivergedError
from retention.data.batching import NoteVectors, collate
from retention.data.schema import Dataset
from retention.engine.layers import Mode
from retention.engine.optim import clip_grad_norm, grad_norm, sgd_step
from retention.fairness.mitigation import prejudice_regularizer
from retention.model.encoders import ForwardContext
from retention.model.heads import batch_total_loss
from retention.model.network import RetentionNetwork

logger = logging.getLogger(__name__)


@dataclass
class TraceRow:
    iteration: int
    epoch: int
    lr: float
    loss: float
    grad_norm: float


@dataclass
class TrainResult:
    network: RetentionNetwork
    trace: List[TraceRow] = field(default_factory=list)

    def trace_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(row) for row in self.trace], columns=list(TraceRow.__dataclass_fields__))

    def epoch_losses(self) -> Dict[int, float]:
        frame = self.trace_frame()
        if frame.empty:
            return {}
        return {int(k): float(v) for k, v in frame.groupby("epoch")["loss"].mean().items()}

    def write_trace(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.trace_frame().to_csv(path, index=False, float_format="%.17g")
        return path

    @property
    def final_loss(self) -> Optional[float]:
        return self.trace[-1].loss if self.trace else None


class _BatchSampler:
    def __init__(self, size: int, batch_size: int, rng: np.random.Generator):
        self.size = size
        self.batch_size = min(batch_size, size)
        self.rng = rng
        self.epoch = 0
        self.order = rng.permutation(size)
        self.position = 0

    def next(self) -> np.ndarray:
        if self.position + self.batch_size > self.size:
            self.epoch += 1
            self.order = self.rng.permutation(self.size)
            self.position = 0
        idx = self.order[self.position:self.position + self.batch_size]
        self.position += self.batch_size
        return idx


def train(
    network: RetentionNetwork,
    dataset: Dataset,
    vectors: NoteVectors,
    schedule: ScheduleConfig,
    seed: int = 0,
    weights: Optional[np.ndarray] = None,
    fairness: Optional[FairnessConfig] = None,
) -> TrainResult:
    if not dataset:
        raise ParameterError("cannot train on an empty dataset")
    weights = np.ones(len(dataset)) if weights is None else np.asarray(weights, dtype=np.float64)
    if len(weights) != len(dataset):
        raise ParameterError(f"got {len(weights)} sample weights for {len(dataset)} records")
    use_regularizer = fairness is not None and fairness.mitigation == "regularizer"

    dims = network.dims
    params = network.trainable()
    velocity: Dict[int, np.ndarray] = {}
    sampler = _BatchSampler(len(dataset), schedule.batch_size, np.random.default_rng(seed))
    result = TrainResult(network)

    phases = schedule.scaled_phases()
    logger.info(
        f"train: {len(dataset)} records, {schedule.total_iterations} iterations "
        f"in {len(phases)} phase(s), batch={sampler.batch_size}, seed={seed}"
    )
    iteration = 0
    for phase in phases:
        for _ in range(phase.iterations):
            idx = sampler.next()
            batch = collate(
                [dataset[i] for i in idx], vectors, network.note_dim, dims.mask_rule_3, weights[idx]
            )
            ctx = ForwardContext.from_dims(dims, Mode.TRAIN, np.random.default_rng([seed, iteration]))
            _, outputs = network.forward(batch, ctx)

            regularizer = None
            if use_regularizer:
                regularizer = prejudice_regularizer(outputs.p1, batch.groups == fairness.privileged, fairness.eta)
            loss = batch_total_loss(outputs, batch.labels, batch.mask, batch.weights, regularizer)

            value = loss.item()
            if not math.isfinite(value):
                logger.error(f"train: loss is {value} at iteration {iteration}, aborting")
                raise TrainingDivergedError(
                    f"training diverged: loss {value} at iteration {iteration} (lr={phase.lr})",
                    detail={"iteration": iteration, "lr": phase.lr, "loss": str(value)},
                )
            loss.backward()
            if schedule.clip_norm is not None:
                norm = clip_grad_norm(params, schedule.clip_norm)
            else:
                norm = grad_norm(params)
            sgd_step(params, phase.lr, schedule.momentum, velocity)

            result.trace.append(TraceRow(iteration, sampler.epoch, phase.lr, value, norm))
            if (iteration + 1) % schedule.log_every == 0:
                recent = np.mean([row.loss for row in result.trace[-schedule.log_every:]])
                logger.info(f"train: iter {iteration + 1} | epoch {sampler.epoch} | lr {phase.lr:g} | loss {recent:.4f}")
            iteration += 1

    if result.trace:
        logger.info(f"train: done, final loss {result.final_loss:.4f} after {iteration} iterations")
    return result
