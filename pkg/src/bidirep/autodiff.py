"""Dense float64 tensors with reverse-mode gradients.

Every value is a numpy float64 array wrapped in a :class:`Tensor`.  When
gradients are enabled, each derived tensor remembers its parent tensors and
a closure that maps the output gradient to parent gradients; calling
``backward()`` on a scalar walks the graph once in reverse topological
order and accumulates ``.grad`` on every reachable tensor that requires a
gradient.  Everything runs on the CPU in 64-bit floats: the datasets and
models here are small, and debuggability beats speed.

Ops are vectorized over numpy, so graphs stay small (one node per layer-ish
operation) even for large batches.  ``matmul`` accepts stacked operands
(numpy matmul semantics), which is what batched multi-head attention needs.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Operand extents do not conform."""


class MaskError(ValueError):
    """A softmax row contains only -inf entries (fully masked)."""


class BatchSizeError(ValueError):
    """Batch statistics requested over fewer than two rows."""


_GRAD_ENABLED = True


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference paths)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _as_array(values) -> np.ndarray:
    return np.asarray(values, dtype=np.float64)


class Tensor:
    """A float64 array plus optional gradient bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, values, requires_grad: bool = False):
        self.data = _as_array(values)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        grad = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{grad})"

    # -- graph traversal ---------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(parent) into .grad over the whole graph.

        self must be scalar (one element); raises ShapeError otherwise.
        """
        if self.size != 1:
            raise ShapeError(
                f"backward requires a scalar loss, got shape {self.shape}"
            )
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward_fn is None:
                continue
            grads = node._backward_fn(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = g
                else:
                    parent.grad = parent.grad + g

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *perm):
        if len(perm) == 1 and isinstance(perm[0], (tuple, list)):
            perm = tuple(perm[0])
        return transpose(self, perm or None)

    def relu(self):
        return relu(self)

    def exp(self):
        return texp(self)

    def log(self):
        return tlog(self)

    def sqrt(self):
        return tsqrt(self)

    def sigmoid(self):
        return sigmoid(self)


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def _coerce(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward_fn = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(
        i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1
    )
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- elementwise arithmetic --------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out = a.data * b.data

    def backward(g):
        return (
            _unbroadcast(g * b.data, a.shape),
            _unbroadcast(g * a.data, b.shape),
        )

    return _make(out, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out = a.data / b.data

    def backward(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return _make(out, (a, b), backward)


def power(a, exponent) -> Tensor:
    a = _coerce(a)
    p = float(exponent)
    out = a.data**p

    def backward(g):
        return (g * p * a.data ** (p - 1.0),)

    return _make(out, (a,), backward)


def relu(a) -> Tensor:
    a = _coerce(a)
    out = np.maximum(a.data, 0.0)

    def backward(g):
        return (g * (a.data > 0.0),)

    return _make(out, (a,), backward)


def texp(a) -> Tensor:
    a = _coerce(a)
    out = np.exp(a.data)

    def backward(g):
        return (g * out,)

    return _make(out, (a,), backward)


def tlog(a) -> Tensor:
    a = _coerce(a)
    out = np.log(a.data)

    def backward(g):
        return (g / a.data,)

    return _make(out, (a,), backward)


def tsqrt(a) -> Tensor:
    a = _coerce(a)
    out = np.sqrt(a.data)

    def backward(g):
        return (g * 0.5 / out,)

    return _make(out, (a,), backward)


def sigmoid(a) -> Tensor:
    a = _coerce(a)
    out = _sigmoid_np(a.data)

    def backward(g):
        return (g * out * (1.0 - out),)

    return _make(out, (a,), backward)


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    # Split by sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# -- reductions and layout ----------------------------------------------------


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = _coerce(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), backward)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = _coerce(a)
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(a, shape) -> Tensor:
    a = _coerce(a)
    out = a.data.reshape(shape)

    def backward(g):
        return (g.reshape(a.shape),)

    return _make(out, (a,), backward)


def transpose(a, perm=None) -> Tensor:
    a = _coerce(a)
    if perm is None:
        perm = tuple(reversed(range(a.ndim)))
    out = a.data.transpose(perm)
    inverse = tuple(np.argsort(perm))

    def backward(g):
        return (g.transpose(inverse),)

    return _make(out, (a,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_coerce(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        slicer = [slice(None)] * g.ndim
        grads = []
        for i in range(len(tensors)):
            slicer[axis] = slice(offsets[i], offsets[i + 1])
            grads.append(g[tuple(slicer)])
        return tuple(grads)

    return _make(out, tuple(tensors), backward)


def gather_rows(table, indices) -> Tensor:
    """Select rows of a 2-D table; gradient scatter-adds back into it."""
    table = _coerce(table)
    if table.ndim != 2:
        raise ShapeError(f"gather_rows expects a 2-D table, got {table.shape}")
    idx = np.asarray(indices, dtype=np.intp)
    out = table.data[idx]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    return _make(out, (table,), backward)


# -- core numeric ops ----------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product, also over stacked leading axes (batched)."""
    a, b = _coerce(a), _coerce(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(
            f"matmul needs at least 2-D operands, got {a.shape} and {b.shape}"
        )
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(
            f"matmul inner extents differ: {a.shape} vs {b.shape}"
        )
    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(out, (a, b), backward)


def affine(x, w, b, activation: str = "none") -> Tensor:
    """x @ w + b over the trailing axis, with an optional relu."""
    x, w, b = _coerce(x), _coerce(w), _coerce(b)
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise ShapeError(
            f"affine input extent {x.shape} does not match weight {w.shape}"
        )
    if b.shape != (w.shape[1],):
        raise ShapeError(
            f"affine bias shape {b.shape} does not match weight {w.shape}"
        )
    out = add(matmul(x, w), b)
    if activation == "relu":
        return relu(out)
    if activation == "none":
        return out
    raise ValueError(f"unknown activation {activation!r}")


def softmax_rows(m) -> Tensor:
    """Row-wise softmax over the last axis; -inf entries map to exact 0.

    A row whose entries are all -inf has no distribution to normalize and
    raises MaskError.
    """
    m = _coerce(m)
    row_max = np.max(m.data, axis=-1, keepdims=True)
    if np.isneginf(row_max).any():
        raise MaskError("softmax row is fully masked (all entries -inf)")
    shifted = m.data - row_max
    exps = np.exp(shifted)
    out = exps / exps.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - inner),)

    return _make(out, (m,), backward)


def bce_with_logits(logits, labels) -> Tensor:
    """Mean binary cross-entropy evaluated in logit space.

    Uses max(x,0) - x*y + log1p(exp(-|x|)) per element, which never
    materializes sigmoid followed by log and so cannot overflow for large
    |logit|.  Labels must be exactly 0 or 1.
    """
    logits = _coerce(logits)
    y = _as_array(labels.data if isinstance(labels, Tensor) else labels)
    if y.shape != logits.shape:
        raise ShapeError(
            f"labels shape {y.shape} does not match logits {logits.shape}"
        )
    bad = (y != 0.0) & (y != 1.0)
    if bad.any():
        where = np.argwhere(bad)[0]
        raise ValueError(
            f"labels must be 0 or 1, found {y[tuple(where)]} at {tuple(where)}"
        )
    x = logits.data
    per_elem = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    out = per_elem.mean()
    n = x.size

    def backward(g):
        return ((_sigmoid_np(x) - y) * (g / n),)

    return _make(np.asarray(out), (logits,), backward)


# -- batch normalization -------------------------------------------------------


@dataclass
class BatchNormState:
    """Running statistics for one batch-norm layer (one entry per channel)."""

    mean: np.ndarray
    var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5
    batches_seen: int = 0

    @classmethod
    def initial(cls, dim: int, momentum: float = 0.1, eps: float = 1e-5):
        return cls(
            mean=np.zeros(dim), var=np.ones(dim), momentum=momentum, eps=eps
        )

    def update(self, batch_mean: np.ndarray, batch_var: np.ndarray) -> None:
        m = self.momentum
        self.mean = (1.0 - m) * self.mean + m * batch_mean
        self.var = (1.0 - m) * self.var + m * batch_var
        self.batches_seen += 1


def batch_norm(
    x,
    gamma,
    beta,
    state: BatchNormState,
    mode: str = "train",
    row_weights: np.ndarray | None = None,
) -> Tensor:
    """Normalize columns of x (N rows, d channels) then scale/shift.

    Train mode normalizes by the batch mean and population variance and
    folds those statistics into the running averages; inference mode uses
    the running statistics only.  ``row_weights`` (0/1 per row) excludes
    rows from the statistics without changing the output shape; rows with
    zero weight are still normalized by the included-row statistics.
    """
    x, gamma, beta = _coerce(x), _coerce(gamma), _coerce(beta)
    if x.ndim != 2:
        raise ShapeError(f"batch_norm expects a 2-D input, got {x.shape}")
    if mode == "train":
        if row_weights is None:
            n_eff = x.shape[0]
            wn = np.full((x.shape[0], 1), 1.0 / max(n_eff, 1))
        else:
            w = _as_array(row_weights).reshape(-1)
            if w.shape[0] != x.shape[0]:
                raise ShapeError(
                    f"row_weights length {w.shape[0]} != batch rows {x.shape[0]}"
                )
            total = w.sum()
            n_eff = int(round(total))
            wn = (w / total).reshape(-1, 1) if total > 0 else w.reshape(-1, 1)
        if n_eff < 2:
            raise BatchSizeError(
                f"batch_norm(train) needs at least 2 rows in the statistics, got {n_eff}"
            )
        mu = (x * wn).sum(axis=0)
        diff = x - mu
        var = (diff * diff * wn).sum(axis=0)
        xhat = diff / tsqrt(var + state.eps)
        state.update(mu.data, var.data)
    elif mode == "inference":
        xhat = (x - state.mean) / np.sqrt(state.var + state.eps)
    else:
        raise ValueError(f"unknown batch_norm mode {mode!r}")
    return xhat * gamma + beta
