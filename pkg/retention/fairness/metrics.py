"""
Group fairness metrics over binary predictions.

"Positive" below means the favorable outcome (for future dropout:
no dropout). Rates are taken per group:

    SPD = P(ŷ=fav | unpriv) − P(ŷ=fav | priv)
    EOD = TPR_unpriv − TPR_priv
    AOD = ½ [(FPR_unpriv − FPR_priv) + (TPR_unpriv − TPR_priv)]
    DI  = P(ŷ=fav | unpriv) / P(ŷ=fav | priv)

A metric whose rates are undefined (no positives, no negatives, or a
zero denominator for DI) is reported as None.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from retention.core.errors import SingleGroupError

logger = logging.getLogger(__name__)

# fair ranges per metric
TARGETS: Dict[str, Tuple[float, float]] = {
    "spd": (-0.1, 0.1),
    "eod": (-0.1, 0.1),
    "aod": (-0.1, 0.1),
    "di": (0.8, 1.2),
}

PRIVILEGED, UNPRIVILEGED = 0, 1


@dataclass
class GroupOutcomes:
    """counts[group, favorable_label, favorable_prediction], group 0 = privileged."""

    counts: np.ndarray = field(default_factory=lambda: np.zeros((2, 2, 2), dtype=int))

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=int)
        if self.counts.shape != (2, 2, 2) or np.any(self.counts < 0):
            raise ValueError("counts must be a non-negative [2, 2, 2] table")

    @classmethod
    def from_predictions(
        cls,
        groups: Sequence[str],
        labels: Sequence[int],
        predictions: Sequence[int],
        privileged: str = "male",
        favorable: int = 0,
    ) -> "GroupOutcomes":
        groups = np.asarray(groups)
        g = np.where(groups == privileged, PRIVILEGED, UNPRIVILEGED)
        y = (np.asarray(labels) == favorable).astype(int)
        p = (np.asarray(predictions) == favorable).astype(int)
        counts = np.zeros((2, 2, 2), dtype=int)
        np.add.at(counts, (g, y, p), 1)
        return cls(counts)

    def group_size(self, group: int) -> int:
        return int(self.counts[group].sum())

    def favorable_rate(self, group: int) -> Optional[float]:
        size = self.group_size(group)
        return None if size == 0 else float(self.counts[group, :, 1].sum()) / size

    def tpr(self, group: int) -> Optional[float]:
        positives = self.counts[group, 1].sum()
        return None if positives == 0 else float(self.counts[group, 1, 1]) / positives

    def fpr(self, group: int) -> Optional[float]:
        negatives = self.counts[group, 0].sum()
        return None if negatives == 0 else float(self.counts[group, 0, 1]) / negatives

    def accuracy(self) -> Optional[float]:
        total = self.counts.sum()
        correct = self.counts[:, 0, 0].sum() + self.counts[:, 1, 1].sum()
        return None if total == 0 else float(correct) / total

    def swapped(self) -> "GroupOutcomes":
        return GroupOutcomes(self.counts[::-1].copy())


@dataclass
class FairnessReport:
    spd: Optional[float]
    eod: Optional[float]
    aod: Optional[float]
    di: Optional[float]

    @property
    def fair_flags(self) -> Dict[str, Optional[bool]]:
        flags = {}
        for name, (low, high) in TARGETS.items():
            value = getattr(self, name)
            flags[name] = None if value is None else bool(low <= value <= high)
        return flags

    @property
    def all_fair(self) -> bool:
        return all(self.fair_flags.values())

    def to_dict(self) -> dict:
        return {
            "spd": self.spd,
            "eod": self.eod,
            "aod": self.aod,
            "di": self.di,
            "fair": self.fair_flags,
        }


def _diff(a: Optional[float], b: Optional[float]) -> Optional[float]:
    return None if a is None or b is None else a - b


def compute_metrics(outcomes: GroupOutcomes) -> FairnessReport:
    for group, name in ((PRIVILEGED, "privileged"), (UNPRIVILEGED, "unprivileged")):
        if outcomes.group_size(group) == 0:
            raise SingleGroupError(
                f"the {name} group has no members; fairness metrics need both groups",
                detail={"group": name},
            )
    rate_u = outcomes.favorable_rate(UNPRIVILEGED)
    rate_p = outcomes.favorable_rate(PRIVILEGED)
    tpr_gap = _diff(outcomes.tpr(UNPRIVILEGED), outcomes.tpr(PRIVILEGED))
    fpr_gap = _diff(outcomes.fpr(UNPRIVILEGED), outcomes.fpr(PRIVILEGED))

    if rate_p == 0:
        logger.warning("compute_metrics: privileged favorable rate is 0; DI undefined")
    return FairnessReport(
        spd=_diff(rate_u, rate_p),
        eod=tpr_gap,
        aod=None if tpr_gap is None or fpr_gap is None else 0.5 * (fpr_gap + tpr_gap),
        di=None if not rate_p else rate_u / rate_p,
    )
