"""Small define-by-run reverse-mode autodiff over float64 numpy arrays.

Only the primitives needed for embedding models and an LSTM are provided.
Elementwise ops require equal shapes; broadcasting is explicit via
:func:`expand`.
"""
from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    pass


class NumericError(FloatingPointError):
    pass


class Value:
    __slots__ = ("data", "grad", "parents", "_backward", "requires_grad")

    def __init__(self, data, parents=(), backward=None, requires_grad=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = tuple(parents)
        self._backward = backward
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in self.parents)
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Value(shape={self.shape})"

    def __add__(self, other):
        return add(self, _wrap(other))

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)


def _wrap(x) -> Value:
    return x if isinstance(x, Value) else Value(x, requires_grad=False)


def constant(data) -> Value:
    return Value(data, requires_grad=False)


class Parameter(Value):
    """Trainable array with its Adam moment estimates."""

    __slots__ = ("name", "m", "v", "step")

    def __init__(self, name: str, data):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)
        self.step = 0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def _node(data, parents, backward):
    parents = tuple(parents)
    if not any(p.requires_grad for p in parents):
        return Value(data, requires_grad=False)
    return Value(data, parents, backward, requires_grad=True)


def _accumulate(v: Value, g):
    if not v.requires_grad:
        return
    if v.grad is None:
        v.grad = np.array(g, dtype=np.float64)
    else:
        v.grad += g


def _same_shape(a: Value, b: Value, op: str):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def scatter_add(target: np.ndarray, ids: np.ndarray, rows: np.ndarray) -> None:
    """``target[ids] += rows`` with repeated ids accumulated (sorted reduction)."""
    if ids.size == 0:
        return
    order = np.argsort(ids, kind="stable")
    sorted_ids = ids[order]
    starts = np.flatnonzero(np.r_[True, sorted_ids[1:] != sorted_ids[:-1]])
    target[sorted_ids[starts]] += np.add.reduceat(rows[order], starts, axis=0)


# --------------------------------------------------------------- primitives

def lookup(table: Value, ids) -> Value:
    """Gather rows of ``table``; output shape is ``ids.shape + (d,)``."""
    ids = np.asarray(ids, dtype=np.int64)
    n = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise IndexError(f"lookup id out of range for table with {n} rows")
    out = table.data[ids]

    def backward(g):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            scatter_add(table.grad, ids.reshape(-1), g.reshape(-1, *table.shape[1:]))

    return _node(out, (table,), backward)


def add(a: Value, b: Value) -> Value:
    _same_shape(a, b, "add")

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _node(a.data + b.data, (a, b), backward)


def sub(a: Value, b: Value) -> Value:
    _same_shape(a, b, "sub")

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _node(a.data - b.data, (a, b), backward)


def mul(a: Value, b: Value) -> Value:
    _same_shape(a, b, "mul")

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * b.data)
        if b.requires_grad:
            _accumulate(b, g * a.data)

    return _node(a.data * b.data, (a, b), backward)


def scale(a: Value, c: float) -> Value:
    def backward(g):
        _accumulate(a, g * c)

    return _node(a.data * c, (a,), backward)


def expand(a: Value, axis: int, size: int) -> Value:
    """Insert a new axis of length ``size`` by repetition."""
    axis = axis if axis >= 0 else a.data.ndim + 1 + axis
    out = np.repeat(np.expand_dims(a.data, axis), size, axis=axis)

    def backward(g):
        _accumulate(a, g.sum(axis=axis))

    return _node(out, (a,), backward)


def matmul(x: Value, w: Value, row_stable: bool = False) -> Value:
    """``x @ w`` for ``x`` of shape (..., d) and a 2-D ``w`` of shape (d, m).

    BLAS results for one row depend on how many rows are multiplied together;
    ``row_stable=True`` uses a non-blocked kernel whose rows are bit-identical
    whatever the batch size.
    """
    if w.data.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {x.shape} by {w.shape}")
    if row_stable:
        out = np.einsum("...d,dm->...m", x.data, w.data, optimize=False)
    else:
        out = x.data @ w.data

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g @ w.data.T)
        if w.requires_grad:
            d, m = w.shape
            _accumulate(w, x.data.reshape(-1, d).T @ g.reshape(-1, m))

    return _node(out, (x, w), backward)


def sigmoid(a: Value) -> Value:
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))

    def backward(g):
        _accumulate(a, g * out * (1.0 - out))

    return _node(out, (a,), backward)


def tanh(a: Value) -> Value:
    out = np.tanh(a.data)

    def backward(g):
        _accumulate(a, g * (1.0 - out * out))

    return _node(out, (a,), backward)


def identity(a: Value) -> Value:
    return a


def l2_norm(a: Value, axis: int = -1) -> Value:
    norm = np.sqrt(np.sum(a.data * a.data, axis=axis))

    def backward(g):
        safe = np.where(norm > 0, norm, 1.0)
        # subgradient 0 at the origin
        ratio = np.where(np.expand_dims(norm, axis) > 0, a.data / np.expand_dims(safe, axis), 0.0)
        _accumulate(a, np.expand_dims(g, axis) * ratio)

    return _node(norm, (a,), backward)


def sum(a: Value, axis: int | None = None) -> Value:  # noqa: A001 - mirrors numpy
    out = np.sum(a.data, axis=axis)

    def backward(g):
        if axis is None:
            _accumulate(a, np.full_like(a.data, g))
        else:
            _accumulate(a, np.broadcast_to(np.expand_dims(g, axis), a.shape))

    return _node(out, (a,), backward)


def mean(a: Value) -> Value:
    return scale(sum(a), 1.0 / a.data.size)


def take(a: Value, idx) -> Value:
    """Gather along the first axis (repeats allowed); same as :func:`lookup`."""
    return lookup(a, idx)


def concat(values, axis: int = 0) -> Value:
    values = list(values)
    out = np.concatenate([v.data for v in values], axis=axis)
    bounds = np.cumsum([0] + [v.shape[axis] for v in values])

    def backward(g):
        for v, lo, hi in zip(values, bounds[:-1], bounds[1:]):
            if v.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                _accumulate(v, g[tuple(sl)])

    return _node(out, values, backward)


def dropout(a: Value, p: float, rng: np.random.Generator | None, training: bool = True) -> Value:
    """Inverted dropout: survivors are scaled by 1/(1-p); identity when not training."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return a
    mask = (rng.random(a.shape) >= p) / (1.0 - p)

    def backward(g):
        _accumulate(a, g * mask)

    return _node(a.data * mask, (a,), backward)


def softmax_cross_entropy(scores: Value, targets) -> Value:
    """Per-row ``-log softmax(scores)[target]`` over the last axis.

    For 1-D ``scores`` and an integer target the result is a scalar.
    """
    x = scores.data
    if x.shape[-1] < 2:
        raise ShapeError("softmax_cross_entropy needs at least two classes")
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite score entering the softmax")
    t = np.asarray(targets, dtype=np.int64)
    if t.shape != x.shape[:-1]:
        raise ShapeError(f"targets shape {t.shape} does not match scores {x.shape}")
    if t.size and (t.min() < 0 or t.max() >= x.shape[-1]):
        raise IndexError("target index out of range")
    shifted = x - x.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1))
    picked = np.take_along_axis(shifted, t[..., None], axis=-1)[..., 0]
    out = lse - picked

    def backward(g):
        p = np.exp(shifted - lse[..., None])
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, t[..., None], 1.0, axis=-1)
        _accumulate(scores, np.expand_dims(g, -1) * (p - onehot))

    return _node(out, (scores,), backward)


# ----------------------------------------------------------------- backward

def _topological(root: Value) -> list[Value]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Value) -> None:
    """Populate ``.grad`` of every ancestor of the scalar ``loss``."""
    if loss.data.ndim != 0:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    order = _topological(loss)
    for node in order:
        if not isinstance(node, Parameter):
            node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def zero_grad(params) -> None:
    for p in params:
        p.grad = np.zeros_like(p.data)


def adam_step(params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Bias-corrected Adam update; zeroes gradients afterwards."""
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        p.step += 1
        p.m *= beta1
        p.m += (1.0 - beta1) * g
        p.v *= beta2
        p.v += (1.0 - beta2) * g * g
        m_hat = p.m / (1.0 - beta1 ** p.step)
        v_hat = p.v / (1.0 - beta2 ** p.step)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.grad = np.zeros_like(p.data)
