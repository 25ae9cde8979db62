"""
Train/test partitions, stratified on the future-dropout label.

Only real records are partitioned; synthetic (SMOTE) records are added
to every training side and never to a test side.
"""
import logging
from dataclasses import dataclass
from typing import List

import numpy as np
from sklearn.model_selection import StratifiedKFold, train_test_split

from retention.core.errors import ParameterError
from retention.data.schema import Dataset

logger = logging.getLogger(__name__)


@dataclass
class Fold:
    index: int
    train_idx: np.ndarray
    test_idx: np.ndarray

    def train(self, dataset: Dataset) -> Dataset:
        return [dataset[i] for i in self.train_idx]

    def test(self, dataset: Dataset) -> Dataset:
        return [dataset[i] for i in self.test_idx]


def split_folds(dataset: Dataset, k: int = 10, seed: int = 0) -> List[Fold]:
    real = np.array([i for i, r in enumerate(dataset) if not r.synthetic], dtype=int)
    synthetic = np.array([i for i, r in enumerate(dataset) if r.synthetic], dtype=int)
    if k < 2:
        raise ParameterError(f"k-fold split needs k >= 2, got {k}")
    if k > len(real):
        raise ParameterError(
            f"cannot split {len(real)} records into {k} folds",
            detail={"k": k, "records": int(len(real))},
        )
    labels = np.array([dataset[i].labels.y1 for i in real])
    splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    try:
        parts = list(splitter.split(real, labels))
    except ValueError as e:
        raise ParameterError(f"stratified {k}-fold split failed: {e}", detail={"k": k})

    return [
        Fold(index=i, train_idx=np.concatenate([real[train], synthetic]), test_idx=real[test])
        for i, (train, test) in enumerate(parts)
    ]


def split_holdout(dataset: Dataset, train_fraction: float = 0.75, seed: int = 0) -> Fold:
    if not 0.0 < train_fraction < 1.0:
        raise ParameterError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    real = np.array([i for i, r in enumerate(dataset) if not r.synthetic], dtype=int)
    synthetic = np.array([i for i, r in enumerate(dataset) if r.synthetic], dtype=int)
    if len(real) < 2:
        raise ParameterError(f"holdout split needs at least 2 records, got {len(real)}")
    labels = np.array([dataset[i].labels.y1 for i in real])
    try:
        train, test = train_test_split(real, train_size=train_fraction, stratify=labels, random_state=seed)
    except ValueError:
        logger.warning("split_holdout: a class is too small to stratify; using a plain random split")
        train, test = train_test_split(real, train_size=train_fraction, random_state=seed)
    return Fold(index=0, train_idx=np.concatenate([np.sort(train), synthetic]), test_idx=np.sort(test))


def make_folds(dataset: Dataset, mode: str, k: int = 10, train_fraction: float = 0.75, seed: int = 0) -> List[Fold]:
    if mode == "kfold":
        folds = split_folds(dataset, k, seed)
    elif mode == "holdout":
        folds = [split_holdout(dataset, train_fraction, seed)]
    else:
        raise ParameterError(f"unknown split mode {mode!r}; valid: kfold, holdout")
    logger.info(f"make_folds: {len(folds)} fold(s), mode={mode}, seed={seed}")
    return folds
