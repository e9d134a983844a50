"""Minimal dense-tensor reverse-mode automatic differentiation.

Define-by-run: each op records its inputs and a backward rule on the
produced tensor; ``backward`` walks the implicit tape in reverse
topological order. Everything is float64 and deliberately small: exact
shape matching everywhere except scalar * tensor and row-vector bias
addition, which removes most silent-broadcast bugs.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, NotScalarError, ShapeMismatchError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward",
                 "name")

    def __init__(self, data, requires_grad: bool = False,
                 _parents: tuple = (), name: str = ""):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise DomainError(f"non-finite values entering tensor {name!r}")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def __repr__(self):
        return f"Tensor(shape={self.shape}, name={self.name!r})"

    # Operator sugar; scalars are lifted to constant tensors.
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, _lift(-1.0))


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=float))


def parameter(data, name: str = "") -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def _needs_grad(*ts: Tensor) -> bool:
    return any(t.requires_grad or t._parents for t in ts)


def _make(data, parents: tuple[Tensor, ...],
          backward: Callable[[np.ndarray], None]) -> Tensor:
    out = Tensor(data, _parents=parents if _needs_grad(*parents) else ())
    if out._parents:
        out._backward = backward
    return out


def _bias_compatible(a: Tensor, b: Tensor) -> bool:
    # Row-vector bias: (n, d) + (d,)
    return a.data.ndim == 2 and b.data.ndim == 1 \
        and a.shape[1] == b.shape[0]


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape == b.shape:
        def bwd(g):
            a._accumulate(g)
            b._accumulate(g)
    elif b.data.ndim == 0:
        def bwd(g):
            a._accumulate(g)
            b._accumulate(np.sum(g))
    elif a.data.ndim == 0:
        def bwd(g):
            a._accumulate(np.sum(g))
            b._accumulate(g)
    elif _bias_compatible(a, b):
        def bwd(g):
            a._accumulate(g)
            b._accumulate(np.sum(g, axis=0))
    else:
        raise ShapeMismatchError(f"add {a.shape} + {b.shape}")
    return _make(a.data + b.data, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, mul(b, _lift(-1.0)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape == b.shape:
        def bwd(g):
            a._accumulate(g * b.data)
            b._accumulate(g * a.data)
    elif b.data.ndim == 0:
        def bwd(g):
            a._accumulate(g * b.data)
            b._accumulate(np.sum(g * a.data))
    elif a.data.ndim == 0:
        def bwd(g):
            a._accumulate(np.sum(g * b.data))
            b._accumulate(g * a.data)
    else:
        raise ShapeMismatchError(f"mul {a.shape} * {b.shape}")
    return _make(a.data * b.data, (a, b), bwd)


def div(a: Tensor, b: Tensor) -> Tensor:
    if np.any(b.data == 0.0):
        raise DomainError("division by zero")
    if a.shape == b.shape:
        def bwd(g):
            a._accumulate(g / b.data)
            b._accumulate(-g * a.data / (b.data ** 2))
    elif b.data.ndim == 0:
        def bwd(g):
            a._accumulate(g / b.data)
            b._accumulate(np.sum(-g * a.data / (b.data ** 2)))
    elif a.data.ndim == 0:
        def bwd(g):
            a._accumulate(np.sum(g / b.data))
            b._accumulate(-g * a.data / (b.data ** 2))
    else:
        raise ShapeMismatchError(f"div {a.shape} / {b.shape}")
    return _make(a.data / b.data, (a, b), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul {a.shape} @ {b.shape}")

    def bwd(g):
        a._accumulate(g @ b.data.T)
        b._accumulate(a.data.T @ g)
    return _make(a.data @ b.data, (a, b), bwd)


def sigmoid(a: Tensor) -> Tensor:
    out_data = np.empty_like(a.data)
    pos = a.data >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ex = np.exp(a.data[~pos])
    out_data[~pos] = ex / (1.0 + ex)

    def bwd(g):
        a._accumulate(g * out_data * (1.0 - out_data))
    return _make(out_data, (a,), bwd)


def relu(a: Tensor) -> Tensor:
    def bwd(g):
        a._accumulate(g * (a.data > 0))
    return _make(np.maximum(a.data, 0.0), (a,), bwd)


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise DomainError("log of non-positive value")

    def bwd(g):
        a._accumulate(g / a.data)
    return _make(np.log(a.data), (a,), bwd)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def bwd(g):
        a._accumulate(g * out_data)
    return _make(out_data, (a,), bwd)


def tsum(a: Tensor, axis: Optional[int] = None) -> Tensor:
    def bwd(g):
        if axis is None:
            a._accumulate(np.full_like(a.data, g))
        else:
            a._accumulate(np.broadcast_to(
                np.expand_dims(g, axis), a.data.shape).copy())
    return _make(np.sum(a.data, axis=axis), (a,), bwd)


def tmean(a: Tensor, axis: Optional[int] = None) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis), _lift(1.0 / count))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            t._accumulate(g[tuple(sl)])
    return _make(np.concatenate([t.data for t in tensors], axis=axis),
                 tuple(tensors), bwd)


def softmax_rows(a: Tensor) -> Tensor:
    if a.data.ndim not in (1, 2):
        raise ShapeMismatchError(f"softmax_rows on ndim {a.data.ndim}")
    x = a.data if a.data.ndim == 2 else a.data[None, :]
    z = x - np.max(x, axis=1, keepdims=True)
    e = np.exp(z)
    s = e / np.sum(e, axis=1, keepdims=True)
    out_data = s if a.data.ndim == 2 else s[0]

    def bwd(g):
        gg = g if g.ndim == 2 else g[None, :]
        dot = np.sum(gg * s, axis=1, keepdims=True)
        grad = s * (gg - dot)
        a._accumulate(grad if a.data.ndim == 2 else grad[0])
    return _make(out_data, (a,), bwd)


def segment_sum(values: Tensor, segment_ids: Sequence[int],
                n_segments: int) -> Tensor:
    """Row-wise scatter-add: out[s] = sum of value rows with segment s."""
    ids = np.asarray(segment_ids, dtype=int)
    if values.data.ndim != 2 or ids.shape[0] != values.data.shape[0]:
        raise ShapeMismatchError(
            f"segment_sum values {values.shape} ids {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= n_segments):
        raise ShapeMismatchError("segment id out of range")
    out_data = np.zeros((n_segments, values.data.shape[1]))
    np.add.at(out_data, ids, values.data)

    def bwd(g):
        values._accumulate(g[ids])
    return _make(out_data, (values,), bwd)


def gather_rows(a: Tensor, indices: Sequence[int]) -> Tensor:
    idx = np.asarray(indices, dtype=int)
    if a.data.ndim != 2:
        raise ShapeMismatchError("gather_rows needs a 2-D tensor")

    def bwd(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, idx, g)
        a._accumulate(grad)
    return _make(a.data[idx], (a,), bwd)


def backward(loss: Tensor) -> None:
    """Backpropagate from a scalar; gradients accumulate on every tensor
    reachable from the loss with requires_grad set."""
    if loss.data.ndim != 0:
        raise NotScalarError(f"loss has shape {loss.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss._accumulate(np.array(1.0))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def zero_grads(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor],
               eps: float = 1e-4) -> float:
    """Max relative error between analytic gradients and central finite
    differences over all parameter entries."""
    zero_grads(params)
    loss = f()
    backward(loss)
    analytic = [np.array(p.grad) if p.grad is not None
                else np.zeros_like(p.data) for p in params]
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            up = float(f().data)
            flat[i] = keep - eps
            dn = float(f().data)
            flat[i] = keep
            numeric = (up - dn) / (2.0 * eps)
            a = ga.reshape(-1)[i]
            err = abs(a - numeric) / max(1.0, abs(a))
            worst = max(worst, err)
    zero_grads(params)
    return worst
