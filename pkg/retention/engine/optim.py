"""
Plain SGD with optional momentum, and global-norm gradient clipping.
"""
import logging
from typing import Dict, Iterable, List, Optional, Union

import numpy as np

from retention.core.errors import ContractError
from retention.engine.layers import LayerParams
from retention.engine.tensor import Tensor

logger = logging.getLogger(__name__)

ParamSource = Union[Iterable[LayerParams], Iterable[Tensor], Dict[str, Tensor]]


def _flatten(params: ParamSource) -> List[Tensor]:
    if isinstance(params, dict):
        params = params.values()
    tensors: List[Tensor] = []
    for p in params:
        if isinstance(p, LayerParams):
            tensors.extend(p.tensors())
        else:
            tensors.append(p)
    return tensors


def zero_grad(params: ParamSource) -> None:
    for p in _flatten(params):
        p.zero_grad()


def grad_norm(params: ParamSource) -> float:
    total = 0.0
    for p in _flatten(params):
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    return float(np.sqrt(total))


def clip_grad_norm(params: ParamSource, max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most `max_norm`."""
    tensors = _flatten(params)
    norm = grad_norm(tensors)
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for p in tensors:
            if p.grad is not None:
                p.grad *= scale
    return norm


def sgd_step(
    params: ParamSource,
    learning_rate: float,
    momentum: float = 0.0,
    velocity: Optional[Dict[int, np.ndarray]] = None,
) -> None:
    """
    p ← p − lr·v with v ← momentum·v + grad(p) (v = grad when momentum is 0),
    then zero the gradients.
    """
    tensors = _flatten(params)
    for p in tensors:
        if p.grad is None:
            raise ContractError(
                "sgd_step called on a parameter without a gradient slot",
                detail={"parameter": p.name or repr(p)},
            )

    for p in tensors:
        step = p.grad
        if momentum > 0.0:
            if velocity is None:
                raise ContractError("momentum > 0 needs a velocity map held by the caller")
            v = velocity.get(id(p))
            v = step.copy() if v is None else momentum * v + step
            velocity[id(p)] = v
            step = v
        p.data -= learning_rate * step
        p.zero_grad()
