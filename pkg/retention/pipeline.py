"""
Run orchestration shared by the CLI commands: split, optional SMOTE and
reweighing, per-fold training, evaluation and fairness auditing.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from retention.core.config import RunConfig
from retention.data.batching import NoteVectors
from retention.data.folds import Fold, make_folds
from retention.data.schema import Dataset
from retention.data.smote import smote_rebalance
from retention.fairness.metrics import GroupOutcomes, compute_metrics
from retention.fairness.mitigation import audit_report, reweigh
from retention.model.evaluation import EvaluationReport, aggregate_folds, evaluate, predict
from retention.model.network import RetentionNetwork
from retention.model.training import TrainResult, train

logger = logging.getLogger(__name__)


@dataclass
class FoldRun:
    fold: Fold
    result: TrainResult
    train_ids: List[str]
    test_ids: List[str]
    duration_mean: Optional[float]
    seed: int

    @property
    def network(self) -> RetentionNetwork:
        return self.result.network

    def meta(self, config: RunConfig) -> dict:
        return {
            "fold": self.fold.index,
            "seed": config.seed,
            "train_seed": self.seed,
            "mitigation": config.fairness.mitigation,
            "train_ids": self.train_ids,
            "test_ids": self.test_ids,
            "duration_mean": self.duration_mean,
            "config": config.model_dump(mode="json"),
        }


def training_set(records: Dataset, config: RunConfig, seed: int) -> Tuple[Dataset, Optional[np.ndarray]]:
    """Apply SMOTE and reweighing to one fold's training records."""
    if config.smote.enabled:
        records = smote_rebalance(records, config.smote.k, config.smote.target_ratio, seed)
    weights = None
    if config.fairness.mitigation == "reweigh":
        weights = reweigh(records, config.fairness.protected, config.fairness.favorable_label)
    return records, weights


def _duration_mean(records: Dataset) -> Optional[float]:
    durations = [r.labels.y4 for r in records if r.labels.y4 is not None]
    return float(np.mean(durations)) if durations else None


def train_fold(
    dataset: Dataset,
    fold: Fold,
    config: RunConfig,
    vectors: NoteVectors,
    note_dim: int,
) -> FoldRun:
    seed = config.seed + fold.index
    real_train = fold.train(dataset)
    records, weights = training_set(real_train, config, seed)
    network = RetentionNetwork(config.model, note_dim, seed=seed)
    logger.info(f"train_fold: fold {fold.index}, {len(records)} training records ({len(real_train)} real)")
    result = train(network, records, vectors, config.schedule, seed, weights, config.fairness)
    return FoldRun(
        fold=fold,
        result=result,
        train_ids=[r.id for r in real_train if not r.synthetic],
        test_ids=[r.id for r in fold.test(dataset)],
        duration_mean=_duration_mean(real_train),
        seed=seed,
    )


def run_training(
    dataset: Dataset,
    config: RunConfig,
    vectors: NoteVectors,
    note_dim: int,
    workers: int = 1,
) -> List[FoldRun]:
    """Train every fold; results come back in fold order whatever `workers` is."""
    folds = make_folds(dataset, config.split.mode, config.split.k, config.split.train_fraction, config.seed)
    if workers <= 1 or len(folds) == 1:
        return [train_fold(dataset, fold, config, vectors, note_dim) for fold in folds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda fold: train_fold(dataset, fold, config, vectors, note_dim), folds))


def select(dataset: Dataset, ids: List[str]) -> Dataset:
    wanted = set(ids)
    return [r for r in dataset if r.id in wanted]


def evaluate_network(
    network: RetentionNetwork,
    records: Dataset,
    vectors: NoteVectors,
    duration_mean: Optional[float] = None,
) -> EvaluationReport:
    predictions = predict(network, records, vectors)
    return evaluate(predictions, records, network.dims.mask_rule_3, duration_mean)


def fd_outcomes(
    network: RetentionNetwork,
    records: Dataset,
    vectors: NoteVectors,
    config: RunConfig,
) -> Tuple[GroupOutcomes, float]:
    predictions = predict(network, records, vectors)
    fd_pred = predictions.classes()["fd"]
    labels = np.array([r.labels.y1 for r in records])
    groups = [r.demographics[config.fairness.protected] for r in records]
    outcomes = GroupOutcomes.from_predictions(
        groups, labels, fd_pred, config.fairness.privileged, config.fairness.favorable_label
    )
    return outcomes, float(np.mean(fd_pred == labels))


def audit(
    network: RetentionNetwork,
    dataset: Dataset,
    config: RunConfig,
    vectors: NoteVectors,
    train_ids: Optional[List[str]] = None,
    test_ids: Optional[List[str]] = None,
    train_seed: Optional[int] = None,
) -> dict:
    """
    Fairness of `network` on the test records. With a mitigation
    configured, a mitigated model is retrained on the same training
    records with `train_seed` (the seed `network` was trained with;
    defaults to the run seed) and reported alongside.
    """
    test = select(dataset, test_ids) if test_ids else dataset
    outcomes, accuracy = fd_outcomes(network, test, vectors, config)
    before = compute_metrics(outcomes)

    after, accuracy_after = None, None
    if config.fairness.mitigation != "none":
        train_records = select(dataset, train_ids) if train_ids else dataset
        seed = config.seed if train_seed is None else train_seed
        records, weights = training_set(train_records, config, seed)
        mitigated = RetentionNetwork(config.model, network.note_dim, seed=seed)
        train(mitigated, records, vectors, config.schedule, seed, weights, config.fairness)
        outcomes_after, accuracy_after = fd_outcomes(mitigated, test, vectors, config)
        after = compute_metrics(outcomes_after)
        logger.info(
            f"audit: SPD {before.spd} → {after.spd}, accuracy {accuracy:.4f} → {accuracy_after:.4f}"
        )

    return audit_report(
        before, accuracy, after, accuracy_after,
        mitigation=config.fairness.mitigation,
        privileged=config.fairness.privileged,
    )


def paired_mitigation_run(dataset: Dataset, config: RunConfig, vectors: NoteVectors, note_dim: int) -> dict:
    """Unmitigated and mitigated models on the same holdout split and seed."""
    fold = make_folds(dataset, "holdout", train_fraction=config.split.train_fraction, seed=config.seed)[0]
    baseline_config = config.model_copy(update={"fairness": config.fairness.model_copy(update={"mitigation": "none"})})
    baseline = train_fold(dataset, fold, baseline_config, vectors, note_dim)
    return audit(baseline.network, dataset, config, vectors, baseline.train_ids, baseline.test_ids, baseline.seed)


def summarize_runs(runs: List[FoldRun], dataset: Dataset, vectors: NoteVectors) -> Dict[str, object]:
    reports = [
        evaluate_network(run.network, select(dataset, run.test_ids), vectors, run.duration_mean)
        for run in runs
    ]
    return {"folds": [r.to_dict() for r in reports], "summary": aggregate_folds(reports)}
