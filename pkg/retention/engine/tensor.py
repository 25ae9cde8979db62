"""
Reverse-mode differentiable tensor.

A `Tensor` wraps a float64 numpy array. Operations on tensors that track
gradients record their parents and a closure mapping the output gradient
to one gradient per parent. `Tensor.backward()` walks that trace in
reverse topological order and accumulates into the `grad` slot of every
leaf created with `requires_grad=True`.

Only the operations the network needs are provided.
"""
import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from retention.core.errors import ContractError

_state = threading.local()

Backward = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Run forward passes without recording a trace (per thread)."""
    previous = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


@contextmanager
def record_branches():
    """
    Collect the branch taken by every non-smooth op (relu sign, max and
    pooling argmax, clamp) during the enclosed forward passes, per thread.
    """
    previous = getattr(_state, "branches", None)
    log: list = []
    _state.branches = log
    try:
        yield log
    finally:
        _state.branches = previous


def note_branch(choice: np.ndarray) -> None:
    log = getattr(_state, "branches", None)
    if log is not None:
        log.append(np.array(choice, copy=True))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def as_tensor(value) -> "Tensor":
    return value if isinstance(value, Tensor) else Tensor(value)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    # numpy scalars on the left defer to the reflected Tensor operators
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = np.zeros_like(self.data) if requires_grad else None
        self.name = name
        self._parents: tuple = ()
        self._backward: Optional[Backward] = None

    # ── construction ─────────────────────────────────────────
    @staticmethod
    def from_op(data: np.ndarray, parents: tuple, backward: Backward) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = np.asarray(data, dtype=np.float64)
        out.name = None
        out.grad = None
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    # ── views ────────────────────────────────────────────────
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError("item() needs a single-element tensor", detail={"shape": list(self.shape)})
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={list(self.shape)}{label}, requires_grad={self.requires_grad})"

    # ── arithmetic ───────────────────────────────────────────
    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        a_shape, b_shape = self.shape, other.shape
        return Tensor.from_op(
            self.data + other.data,
            (self, other),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape)),
        )

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor.from_op(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other) -> "Tensor":
        other = as_tensor(other)
        a_shape, b_shape = self.shape, other.shape
        return Tensor.from_op(
            self.data - other.data,
            (self, other),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)),
        )

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) - self

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other
        return Tensor.from_op(
            a.data * b.data,
            (a, b),
            lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other
        return Tensor.from_op(
            a.data / b.data,
            (a, b),
            lambda g: (
                _unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
            ),
        )

    def __rtruediv__(self, other) -> "Tensor":
        return as_tensor(other) / self

    def __pow__(self, exponent: float) -> "Tensor":
        a = self
        return Tensor.from_op(
            a.data ** exponent,
            (a,),
            lambda g: (g * exponent * a.data ** (exponent - 1),),
        )

    def __matmul__(self, other) -> "Tensor":
        """x @ W for x of shape [..., d] and a 2-d W of shape [d, k]."""
        other = as_tensor(other)
        a, b = self, other
        if b.ndim != 2:
            raise ContractError("matmul right operand must be 2-d", detail={"shape": list(b.shape)})

        def backward(g):
            ga = g @ b.data.T
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return ga, gb

        return Tensor.from_op(a.data @ b.data, (a, b), backward)

    # ── elementwise functions ────────────────────────────────
    def exp(self) -> "Tensor":
        out_data = np.exp(self.data)
        return Tensor.from_op(out_data, (self,), lambda g: (g * out_data,))

    def log(self) -> "Tensor":
        a = self
        return Tensor.from_op(np.log(a.data), (a,), lambda g: (g / a.data,))

    def sqrt(self) -> "Tensor":
        out_data = np.sqrt(self.data)
        return Tensor.from_op(out_data, (self,), lambda g: (g * 0.5 / out_data,))

    def tanh(self) -> "Tensor":
        out_data = np.tanh(self.data)
        return Tensor.from_op(out_data, (self,), lambda g: (g * (1.0 - out_data * out_data),))

    def sigmoid(self) -> "Tensor":
        out_data = 0.5 * (np.tanh(0.5 * self.data) + 1.0)
        return Tensor.from_op(out_data, (self,), lambda g: (g * out_data * (1.0 - out_data),))

    def relu(self) -> "Tensor":
        positive = self.data > 0
        note_branch(positive)
        return Tensor.from_op(self.data * positive, (self,), lambda g: (g * positive,))

    def clamp_min(self, floor: float) -> "Tensor":
        keep = self.data > floor
        note_branch(keep)
        return Tensor.from_op(np.maximum(self.data, floor), (self,), lambda g: (g * keep,))

    # ── reductions ───────────────────────────────────────────
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        shape = self.shape

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor.from_op(
            np.asarray(self.data.sum(axis=axis, keepdims=keepdims)), (self,), backward
        )

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.data.size
        else:
            axes = (axis,) if isinstance(axis, int) else axis
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def max(self, axis: int) -> "Tensor":
        """Max along one axis; the gradient is routed to the first argmax."""
        index = np.expand_dims(np.argmax(self.data, axis=axis), axis)
        note_branch(index)
        shape = self.shape

        def backward(g):
            full = np.zeros(shape)
            np.put_along_axis(full, index, np.expand_dims(g, axis), axis=axis)
            return (full,)

        out_data = np.take_along_axis(self.data, index, axis=axis).squeeze(axis)
        return Tensor.from_op(out_data, (self,), backward)

    # ── shape ────────────────────────────────────────────────
    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        original = self.shape
        return Tensor.from_op(
            self.data.reshape(shape), (self,), lambda g: (g.reshape(original),)
        )

    def transpose(self, *axes) -> "Tensor":
        axes = axes or tuple(reversed(range(self.ndim)))
        inverse = np.argsort(axes)
        return Tensor.from_op(
            self.data.transpose(axes), (self,), lambda g: (g.transpose(inverse),)
        )

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def __getitem__(self, index) -> "Tensor":
        shape = self.shape

        def backward(g):
            full = np.zeros(shape)
            np.add.at(full, index, g)
            return (full,)

        return Tensor.from_op(np.array(self.data[index]), (self,), backward)

    # ── reverse pass ─────────────────────────────────────────
    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """
        Fill `grad` of every tracked leaf reachable from this tensor.
        Gradients accumulate across calls until the leaves are zeroed.
        """
        if grad is None:
            if self.data.size != 1:
                raise ContractError(
                    "backward() needs a scalar loss",
                    detail={"shape": list(self.shape)},
                )
            grad = np.ones_like(self.data)
        if not self.requires_grad:
            return

        pending: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(_topological_order(self)):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + pg
                else:
                    pending[key] = pg


def _topological_order(root: Tensor) -> list:
    order: list = []
    seen: set = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


# ── n-ary helpers ────────────────────────────────────────────
def concat(tensors: Iterable[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return Tensor.from_op(
        np.concatenate([t.data for t in tensors], axis=axis),
        tuple(tensors),
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


def stack(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    count = len(tensors)
    return Tensor.from_op(
        np.stack([t.data for t in tensors], axis=axis),
        tuple(tensors),
        lambda g: tuple(np.take(g, i, axis=axis) for i in range(count)),
    )


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shift = Tensor(x.data.max(axis=axis, keepdims=True))
    e = (x - shift).exp()
    return e / e.sum(axis=axis, keepdims=True)
