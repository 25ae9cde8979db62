"""
Cascaded task heads, the two loss forms and conditional loss masking.

Head k sees the fused representation z and, for k >= 2, the hidden
features of head k-1. Each head is dense(width, relu) followed by its
output layer.

    FD  future dropout          softmax over 2
    TD  type of dropout         softmax over 2   (1 = temporary)
    ND  next-semester dropout   softmax over 2
    DD  duration of dropout     linear, 1 unit (semesters)
    CD  cause of dropout        softmax over 15
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from retention.core.errors import ContractError, DimensionError
from retention.data.schema import N_CAUSES, TaskLabels
from retention.engine.layers import LayerParams, dense_forward
from retention.engine.tensor import Tensor, as_tensor, concat, softmax

logger = logging.getLogger(__name__)

TASKS: List[str] = ["fd", "td", "nd", "dd", "cd"]
HEAD_OUTPUTS: Dict[str, int] = {"fd": 2, "td": 2, "nd": 2, "dd": 1, "cd": N_CAUSES}

# clamp for log(p) so a zero probability never yields an infinite loss
PROB_FLOOR = 1e-12


@dataclass
class HeadParams:
    hidden: LayerParams
    output: LayerParams


@dataclass
class CascadeParams:
    heads: Dict[str, HeadParams]
    z_dim: int
    width: int

    @classmethod
    def init(cls, z_dim: int, width: int, rng: np.random.Generator) -> "CascadeParams":
        heads = {}
        for k, task in enumerate(TASKS):
            d_in = z_dim if k == 0 else z_dim + width
            heads[task] = HeadParams(
                hidden=LayerParams.dense(d_in, width, rng),
                output=LayerParams.dense(width, HEAD_OUTPUTS[task], rng),
            )
        return cls(heads=heads, z_dim=z_dim, width=width)

    def named_layers(self) -> Dict[str, LayerParams]:
        layers = {}
        for task, head in self.heads.items():
            layers[f"{task}.hidden"] = head.hidden
            layers[f"{task}.output"] = head.output
        return layers


@dataclass
class TaskOutputs:
    p1: Tensor
    p2: Tensor
    p3: Tensor
    y4_hat: Tensor
    p5: Tensor
    hidden: List[Tensor]

    def probabilities(self) -> List[Tensor]:
        return [self.p1, self.p2, self.p3, self.p5]


def cascade_forward(z: Tensor, params: CascadeParams) -> TaskOutputs:
    if z.shape[-1] != params.z_dim:
        raise DimensionError("cascade input z", [params.z_dim], [z.shape[-1]])
    hidden: List[Tensor] = []
    raw: Dict[str, Tensor] = {}
    previous: Optional[Tensor] = None
    for task in TASKS:
        head = params.heads[task]
        x = z if previous is None else concat([z, previous], axis=-1)
        h = dense_forward(x, head.hidden, "relu")
        raw[task] = dense_forward(h, head.output)
        hidden.append(h)
        previous = h

    dd = raw["dd"]
    return TaskOutputs(
        p1=softmax(raw["fd"]),
        p2=softmax(raw["td"]),
        p3=softmax(raw["nd"]),
        y4_hat=dd.reshape(*dd.shape[:-1]),
        p5=softmax(raw["cd"]),
        hidden=hidden,
    )


# ── losses ───────────────────────────────────────────────────
def cross_entropy(p: Union[Tensor, np.ndarray], y: Union[int, Sequence[int], np.ndarray]) -> Tensor:
    """−log p[y], with p clamped at PROB_FLOOR. Batched p gives one loss per row."""
    p = as_tensor(p)
    classes = p.shape[-1]
    y = np.asarray(y, dtype=int)
    if np.any(y < 0) or np.any(y >= classes):
        raise ContractError(f"class index out of range for {classes} classes", detail={"labels": y.tolist()})
    onehot = np.eye(classes)[y]
    return -(p.clamp_min(PROB_FLOOR).log() * onehot).sum(axis=-1)


def euclidean_loss(y_hat: Union[Tensor, float], y: Union[float, np.ndarray]) -> Tensor:
    diff = as_tensor(y_hat) - np.asarray(y, dtype=np.float64)
    return diff * diff


# ── masking ──────────────────────────────────────────────────
def derive_mask(labels: TaskLabels, mask_rule_3: bool = False) -> np.ndarray:
    """
    m1 = 1 always
    y1 = 0                  → [1, 0, 0, 0, 0]
    y1 = 1, permanent       → [1, 1, 0, 0, 0]
    y1 = 1, temporary, y3=1 → [1, 1, 1, 0, 0] when mask_rule_3 is on
    otherwise               → [1, 1, 1, 1, 1]
    """
    if labels.y1 == 0:
        mask = [1, 0, 0, 0, 0]
    elif labels.y2 == 0:
        mask = [1, 1, 0, 0, 0]
    elif mask_rule_3 and labels.y3 == 1:
        mask = [1, 1, 1, 0, 0]
    else:
        mask = [1, 1, 1, 1, 1]

    needed = {1: labels.y2, 2: labels.y3, 3: labels.y4, 4: labels.y5}
    for k, value in needed.items():
        if mask[k] and value is None:
            raise ContractError(
                f"task {TASKS[k].upper()} is unmasked but its label is undefined",
                detail={"task": TASKS[k], "labels": labels.model_dump()},
            )
    return np.array(mask, dtype=np.float64)


def task_losses(outputs: TaskOutputs, labels: np.ndarray) -> List[Tensor]:
    """
    Unmasked per-task losses. `labels` is [5] or [batch, 5] with class
    indices for FD/TD/ND/CD and the duration for DD; masked entries may
    hold any placeholder.
    """
    labels = np.asarray(labels, dtype=np.float64)
    return [
        cross_entropy(outputs.p1, labels[..., 0].astype(int)),
        cross_entropy(outputs.p2, labels[..., 1].astype(int)),
        cross_entropy(outputs.p3, labels[..., 2].astype(int)),
        euclidean_loss(outputs.y4_hat, labels[..., 3]),
        cross_entropy(outputs.p5, labels[..., 4].astype(int)),
    ]


def label_vector(labels: TaskLabels) -> np.ndarray:
    """[y1, y2, y3, y4, y5] with 0 standing in for undefined labels."""
    values = [labels.y1, labels.y2, labels.y3, labels.y4, labels.y5]
    return np.array([0.0 if v is None else float(v) for v in values])


def total_loss(outputs: TaskOutputs, labels: TaskLabels, mask_rule_3: bool = False) -> Tensor:
    """Σ m_k·L_k for one student (unbatched outputs)."""
    mask = derive_mask(labels, mask_rule_3)
    losses = task_losses(outputs, label_vector(labels))
    total = losses[0] * mask[0]
    for loss, m in zip(losses[1:], mask[1:]):
        total = total + loss * m
    return total


def batch_total_loss(
    outputs: TaskOutputs,
    labels: np.ndarray,
    mask: np.ndarray,
    weights: Optional[np.ndarray] = None,
    regularizer: Optional[Tensor] = None,
) -> Tensor:
    """
    Sample-weighted mean of the per-student masked sums, plus an optional
    regularizer term. `labels` and `mask` are [batch, 5].
    """
    mask = np.asarray(mask, dtype=np.float64)
    batch = mask.shape[0]
    weights = np.ones(batch) if weights is None else np.asarray(weights, dtype=np.float64)
    per_student = None
    for k, loss in enumerate(task_losses(outputs, labels)):
        term = loss * mask[:, k]
        per_student = term if per_student is None else per_student + term
    loss = (per_student * weights).sum() * (1.0 / float(weights.sum()))
    if regularizer is not None:
        loss = loss + regularizer
    return loss
