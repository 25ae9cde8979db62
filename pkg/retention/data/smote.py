"""
SMOTE oversampling of the minority future-dropout class.

Synthetic points interpolate between a minority sample and one of its
k nearest minority neighbours: x_new = x + λ·(neighbour − x), λ ~ U[0, 1].
"""
import logging
from dataclasses import dataclass
from typing import List

import numpy as np
from sklearn.neighbors import NearestNeighbors

from retention.core.errors import ParameterError
from retention.data.schema import Dataset, StudentRecord

logger = logging.getLogger(__name__)


@dataclass
class SmoteDraw:
    points: np.ndarray
    base: np.ndarray
    neighbour: np.ndarray
    lam: np.ndarray


def smote_sample(minority: np.ndarray, n_new: int, k: int = 5, seed: int = 0) -> SmoteDraw:
    """Draw `n_new` synthetic rows from the minority matrix [m, d]."""
    minority = np.asarray(minority, dtype=np.float64)
    m = minority.shape[0]
    if m < k + 1:
        raise ParameterError(
            f"SMOTE needs at least k+1={k + 1} minority samples, got {m}",
            detail={"minority": m, "k": k},
        )
    rng = np.random.default_rng(seed)
    nn = NearestNeighbors(n_neighbors=k + 1).fit(minority)
    # column 0 is the sample itself
    neighbours = nn.kneighbors(minority, return_distance=False)[:, 1:]

    base = rng.integers(0, m, size=n_new)
    neighbour = neighbours[base, rng.integers(0, k, size=n_new)]
    lam = rng.uniform(0.0, 1.0, size=n_new)
    points = minority[base] + lam[:, None] * (minority[neighbour] - minority[base])
    return SmoteDraw(points=points, base=base, neighbour=neighbour, lam=lam)


def record_features(record: StudentRecord) -> np.ndarray:
    """Numeric view used for the neighbour search: one-hot, mean and last semester."""
    performance = np.asarray(record.performance)
    return np.concatenate([record.static, performance.mean(axis=0), performance[-1]])


def align_sequence(sequence: np.ndarray, length: int) -> np.ndarray:
    """Right-align to `length` rows, repeating the first row when too short."""
    if len(sequence) >= length:
        return sequence[len(sequence) - length:]
    pad = np.repeat(sequence[:1], length - len(sequence), axis=0)
    return np.concatenate([pad, sequence])


def smote_rebalance(
    dataset: Dataset,
    k: int = 5,
    target_ratio: float = 1.0,
    seed: int = 0,
) -> Dataset:
    """
    Add synthetic minority records until minority/majority reaches
    `target_ratio`. Performance sequences are interpolated semester by
    semester with one λ per record; categorical fields, notes and labels
    come from the base record. Synthetic records carry `synthetic=True`.
    """
    positives = [r for r in dataset if r.labels.y1 == 1]
    negatives = [r for r in dataset if r.labels.y1 == 0]
    minority, majority = sorted([positives, negatives], key=len)
    n_new = int(round(target_ratio * len(majority))) - len(minority)
    if n_new <= 0:
        return list(dataset)

    draw = smote_sample(np.stack([record_features(r) for r in minority]), n_new, k, seed)
    synthetic: List[StudentRecord] = []
    for j, (b, nb, lam) in enumerate(zip(draw.base, draw.neighbour, draw.lam)):
        base = minority[b]
        own = np.asarray(base.performance)
        other = align_sequence(np.asarray(minority[nb].performance), len(own))
        synthetic.append(base.model_copy(update={
            "id": f"{base.id}~smote{j}",
            "performance": (own + lam * (other - own)).tolist(),
            "synthetic": True,
        }))

    logger.info(
        f"smote_rebalance: {len(minority)} minority / {len(majority)} majority, "
        f"added {len(synthetic)} synthetic records (k={k})"
    )
    return list(dataset) + synthetic
