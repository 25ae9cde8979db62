"""
Bias mitigation for the future-dropout task.

- `reweigh`: pre-processing; per-sample weights P(s)·P(y) / P(s, y) that
  make the protected group and the label independent in the weighted
  training set.
- `prejudice_regularizer`: in-processing; eta·(mean p_dropout(unpriv) −
  mean p_dropout(priv))², a squared demographic-parity gap added to the
  training loss. Differentiable surrogate for prejudice removal.
"""
import logging
from typing import Optional, Sequence

import numpy as np

from retention.core.errors import ParameterError
from retention.data.schema import Dataset
from retention.engine.tensor import Tensor
from retention.fairness.metrics import FairnessReport

logger = logging.getLogger(__name__)

AUDIT_REPORT_VERSION = 1


def reweighing_weights(groups: Sequence[str], labels: Sequence[int]) -> np.ndarray:
    groups = np.asarray(groups)
    labels = np.asarray(labels)
    n = len(groups)
    if n == 0:
        raise ParameterError("cannot reweigh an empty dataset")
    weights = np.empty(n)
    group_values, label_values = np.unique(groups), (0, 1)
    if len(group_values) < 2:
        raise ParameterError(
            "reweighing needs both protected groups present",
            detail={"groups": group_values.tolist()},
        )
    for s in group_values:
        in_group = groups == s
        for y in label_values:
            cell = in_group & (labels == y)
            joint = cell.sum() / n
            if joint == 0:
                raise ParameterError(
                    f"no samples with group={str(s)!r}, label={y}; regenerate the cohort "
                    "with more students or a less extreme dropout rate",
                    detail={"group": str(s), "label": y},
                )
            weights[cell] = (in_group.sum() / n) * ((labels == y).sum() / n) / joint
    return weights


def reweigh(dataset: Dataset, protected: str = "gender", favorable: int = 0) -> np.ndarray:
    """Sample weights for the future-dropout label; favorable only selects the label coding."""
    groups = [r.demographics[protected] for r in dataset]
    labels = [int(r.labels.y1 == favorable) for r in dataset]
    weights = reweighing_weights(groups, labels)
    logger.info(f"reweigh: {len(weights)} weights in [{weights.min():.3f}, {weights.max():.3f}]")
    return weights


def prejudice_regularizer(
    p1: Tensor,
    privileged: np.ndarray,
    eta: float,
) -> Tensor:
    """`p1` is [B, 2] with column 1 the dropout probability; `privileged` is a [B] bool mask."""
    privileged = np.asarray(privileged, dtype=bool)
    if eta == 0.0 or privileged.all() or not privileged.any():
        return Tensor(0.0)
    dropout = p1[:, 1]
    priv = privileged.astype(np.float64)
    unpriv = 1.0 - priv
    gap = (dropout * unpriv).sum() * (1.0 / unpriv.sum()) - (dropout * priv).sum() * (1.0 / priv.sum())
    return gap * gap * eta


def audit_report(
    before: FairnessReport,
    accuracy_before: Optional[float],
    after: Optional[FairnessReport] = None,
    accuracy_after: Optional[float] = None,
    mitigation: str = "none",
    privileged: str = "male",
) -> dict:
    report = {
        "report_version": AUDIT_REPORT_VERSION,
        "task": "fd",
        "privileged": privileged,
        "mitigation": mitigation,
        "before": {**before.to_dict(), "accuracy": accuracy_before},
        "after": None,
        "accuracy_delta": None,
    }
    if after is not None:
        report["after"] = {**after.to_dict(), "accuracy": accuracy_after}
        if accuracy_before is not None and accuracy_after is not None:
            report["accuracy_delta"] = accuracy_after - accuracy_before
    return report
