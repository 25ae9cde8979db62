"""
Per-task metrics and breakdown reports.

Accuracy for FD/TD/ND and CD, RMSD for DD. Each task is scored only on
students where its label is defined: TD on all dropouts, ND and DD where
the training mask enables them, CD on every dropout of either type.
A task with no defined samples is reported as None.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from scipy.stats import spearmanr

from retention.core.errors import EmptyDatasetError
from retention.data.batching import NoteVectors, collate
from retention.data.schema import CAUSES, Dataset
from retention.engine.layers import Mode
from retention.engine.tensor import no_grad
from retention.model.encoders import ForwardContext
from retention.model.heads import TASKS, derive_mask, label_vector
from retention.model.network import RetentionNetwork

logger = logging.getLogger(__name__)

REPORT_VERSION = 1

# note-count buckets: [low, high) edges
NOTE_BUCKETS = [(0, 1), (1, 2), (2, 3), (3, 5), (5, 9), (9, None)]


def bucket_label(low: int, high: Optional[int]) -> str:
    if high is None:
        return f"{low}+"
    return str(low) if high == low + 1 else f"{low}-{high - 1}"


@dataclass
class Predictions:
    ids: List[str]
    p1: np.ndarray
    p2: np.ndarray
    p3: np.ndarray
    y4_hat: np.ndarray
    p5: np.ndarray

    def classes(self) -> Dict[str, np.ndarray]:
        return {
            "fd": self.p1.argmax(axis=1),
            "td": self.p2.argmax(axis=1),
            "nd": self.p3.argmax(axis=1),
            "cd": self.p5.argmax(axis=1),
        }


def predict(network: RetentionNetwork, dataset: Dataset, vectors: NoteVectors, batch_size: int = 256) -> Predictions:
    """Inference-mode outputs for every record, in dataset order."""
    if not dataset:
        raise EmptyDatasetError("nothing to predict: the dataset is empty")
    ctx = ForwardContext.from_dims(network.dims, Mode.INFER)
    chunks: Dict[str, list] = {"p1": [], "p2": [], "p3": [], "y4_hat": [], "p5": []}
    with no_grad():
        for start in range(0, len(dataset), batch_size):
            batch = collate(dataset[start:start + batch_size], vectors, network.note_dim, network.dims.mask_rule_3)
            _, outputs = network.forward(batch, ctx)
            for name in chunks:
                chunks[name].append(getattr(outputs, name).data)
    return Predictions(ids=[r.id for r in dataset], **{k: np.concatenate(v) for k, v in chunks.items()})


@dataclass
class EvaluationReport:
    metrics: Dict[str, Optional[float]]
    counts: Dict[str, int]
    fd_confusion: Dict[str, int]
    dd_baseline_rmsd: Optional[float]
    per_cause: List[dict] = field(default_factory=list)
    note_buckets: List[dict] = field(default_factory=list)
    note_trend_spearman: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "report_version": REPORT_VERSION,
            "metrics": self.metrics,
            "counts": self.counts,
            "fd_confusion": self.fd_confusion,
            "dd_baseline_rmsd": self.dd_baseline_rmsd,
            "note_trend_spearman": self.note_trend_spearman,
        }

    def table(self) -> str:
        lines = [f"{'task':<6}{'metric':<10}{'value':>10}{'n':>8}"]
        for task in TASKS:
            name = "rmsd" if task == "dd" else "accuracy"
            value = self.metrics[task]
            shown = "absent" if value is None else f"{value:.4f}"
            lines.append(f"{task.upper():<6}{name:<10}{shown:>10}{self.counts[task]:>8}")
        if self.dd_baseline_rmsd is not None:
            lines.append(f"{'DD':<6}{'baseline':<10}{self.dd_baseline_rmsd:>10.4f}")
        return "\n".join(lines)

    def write_breakdowns(self, directory: str | Path) -> tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        notes_path = directory / "note_count_accuracy.csv"
        causes_path = directory / "cause_accuracy.csv"
        pd.DataFrame(self.note_buckets, columns=["bucket", "n", *[f"{t}_accuracy" for t in ("fd", "td", "nd", "cd")]]) \
            .to_csv(notes_path, index=False)
        pd.DataFrame(self.per_cause, columns=["cause_index", "cause", "n", "accuracy"]).to_csv(causes_path, index=False)
        return notes_path, causes_path


def _accuracy(predicted: np.ndarray, actual: np.ndarray) -> Optional[float]:
    if len(actual) == 0:
        return None
    return float(np.mean(predicted == actual))


def _rmsd(predicted: np.ndarray, actual: np.ndarray) -> Optional[float]:
    if len(actual) == 0:
        return None
    return float(np.sqrt(np.mean((predicted - actual) ** 2)))


def evaluate(
    predictions: Predictions,
    dataset: Dataset,
    mask_rule_3: bool = False,
    baseline_mean: Optional[float] = None,
) -> EvaluationReport:
    """
    Score `predictions` against the labels of `dataset` (same order).
    `baseline_mean` is the duration a predict-the-mean model would output;
    without it the mean of the evaluated durations is used.
    """
    if not dataset:
        raise EmptyDatasetError("evaluation split is empty")
    labels = np.stack([label_vector(r.labels) for r in dataset])
    masks = np.stack([derive_mask(r.labels, mask_rule_3) for r in dataset])
    dropout = labels[:, 0] == 1
    defined = {
        "fd": np.ones(len(dataset), dtype=bool),
        "td": dropout,
        "nd": masks[:, 2] == 1,
        "dd": masks[:, 3] == 1,
        "cd": dropout,
    }
    column = {"fd": 0, "td": 1, "nd": 2, "dd": 3, "cd": 4}
    classes = predictions.classes()

    metrics: Dict[str, Optional[float]] = {}
    counts: Dict[str, int] = {}
    for task in TASKS:
        sel = defined[task]
        counts[task] = int(sel.sum())
        actual = labels[sel, column[task]]
        if task == "dd":
            metrics[task] = _rmsd(predictions.y4_hat[sel], actual)
        else:
            metrics[task] = _accuracy(classes[task][sel], actual.astype(int))
        if metrics[task] is None:
            logger.warning(f"evaluate: task {task.upper()} has no defined samples; reported as absent")

    fd_pred, fd_true = classes["fd"], labels[:, 0].astype(int)
    confusion = {
        "tp": int(np.sum((fd_pred == 1) & (fd_true == 1))),
        "tn": int(np.sum((fd_pred == 0) & (fd_true == 0))),
        "fp": int(np.sum((fd_pred == 1) & (fd_true == 0))),
        "fn": int(np.sum((fd_pred == 0) & (fd_true == 1))),
    }

    durations = labels[defined["dd"], 3]
    baseline = None
    if len(durations):
        mean = float(durations.mean()) if baseline_mean is None else baseline_mean
        baseline = _rmsd(np.full(len(durations), mean), durations)

    per_cause = []
    cause_true = labels[:, 4].astype(int)
    for index, cause in enumerate(CAUSES):
        sel = dropout & (cause_true == index)
        if sel.any():
            per_cause.append({
                "cause_index": index,
                "cause": cause,
                "n": int(sel.sum()),
                "accuracy": _accuracy(classes["cd"][sel], cause_true[sel]),
            })

    note_counts = np.array([r.note_count for r in dataset])
    buckets = []
    for low, high in NOTE_BUCKETS:
        in_bucket = note_counts >= low if high is None else (note_counts >= low) & (note_counts < high)
        if not in_bucket.any():
            continue
        row = {"bucket": bucket_label(low, high), "n": int(in_bucket.sum())}
        for task in ("fd", "td", "nd", "cd"):
            sel = in_bucket & defined[task]
            row[f"{task}_accuracy"] = _accuracy(classes[task][sel], labels[sel, column[task]].astype(int))
        buckets.append(row)

    return EvaluationReport(
        metrics=metrics,
        counts=counts,
        fd_confusion=confusion,
        dd_baseline_rmsd=baseline,
        per_cause=per_cause,
        note_buckets=buckets,
        note_trend_spearman=note_trend(buckets),
    )


def note_trend(buckets: List[dict]) -> Optional[float]:
    """Spearman correlation of bucket position against FD accuracy."""
    accuracies = [b["fd_accuracy"] for b in buckets if b["fd_accuracy"] is not None]
    if len(accuracies) < 2 or len(set(accuracies)) < 2:
        return None
    rho = spearmanr(np.arange(len(accuracies)), accuracies).statistic
    return None if np.isnan(rho) else float(rho)


def aggregate_folds(reports: List[EvaluationReport]) -> Dict[str, Dict[str, Optional[float]]]:
    """Mean and standard deviation of each task metric across folds, skipping absent values."""
    summary = {}
    for task in TASKS:
        values = [r.metrics[task] for r in reports if r.metrics[task] is not None]
        summary[task] = {
            "mean": float(np.mean(values)) if values else None,
            "std": float(np.std(values)) if values else None,
            "folds": len(values),
        }
    return summary
