"""
Central finite-difference gradient checking.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from retention.engine.tensor import Tensor, no_grad, record_branches


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst: Optional[str]
    per_param: Dict[str, float] = field(default_factory=dict)
    checked: Dict[str, int] = field(default_factory=dict)
    skipped: Dict[str, int] = field(default_factory=dict)

    def passed(self, tolerance: float = 1e-3) -> bool:
        return self.max_rel_error <= tolerance


def relative_error(analytic: float, numeric: float, floor: float = 1e-4) -> float:
    return abs(analytic - numeric) / max(abs(analytic) + abs(numeric), floor)


def _same_branches(a: List[np.ndarray], b: List[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def check_gradients(
    loss_fn: Callable[[], Tensor],
    params: Dict[str, Tensor],
    h: float = 1e-4,
    max_entries: Optional[int] = None,
    seed: int = 0,
    skip_kinks: bool = False,
) -> GradCheckResult:
    """
    Compare reverse-mode gradients of `loss_fn()` against central
    differences. `loss_fn` must be deterministic (fixed dropout seeds).

    With `max_entries`, each parameter is checked at that many random
    positions instead of everywhere. With `skip_kinks`, a position whose
    ±h evaluations change the branch of any relu, max, pooling or clamp
    op is not compared (the difference quotient straddles a kink there);
    another random position is drawn in its place.
    """
    rng = np.random.default_rng(seed)
    for p in params.values():
        p.zero_grad()
    with record_branches() as base:
        loss = loss_fn()
    loss.backward()
    analytic = {name: p.grad.copy() for name, p in params.items()}

    result = GradCheckResult(max_rel_error=0.0, worst=None)
    for name, p in params.items():
        flat = p.data.reshape(-1)
        budget = flat.size if max_entries is None else min(max_entries, flat.size)
        order = np.arange(flat.size) if max_entries is None else rng.permutation(flat.size)
        worst_here, checked, skipped = 0.0, 0, 0
        for i in order:
            if checked == budget:
                break
            original = flat[i]
            with no_grad():
                flat[i] = original + h
                with record_branches() as plus_branches:
                    plus = loss_fn().item()
                flat[i] = original - h
                with record_branches() as minus_branches:
                    minus = loss_fn().item()
            flat[i] = original
            if skip_kinks and not (
                _same_branches(base, plus_branches) and _same_branches(base, minus_branches)
            ):
                skipped += 1
                continue
            numeric = (plus - minus) / (2.0 * h)
            err = relative_error(float(analytic[name].reshape(-1)[i]), numeric)
            worst_here = max(worst_here, err)
            checked += 1
        result.per_param[name] = worst_here
        result.checked[name] = checked
        result.skipped[name] = skipped
        if worst_here >= result.max_rel_error:
            result.max_rel_error = worst_here
            result.worst = name

    for p in params.values():
        p.zero_grad()
    return result
