"""Reverse-mode autodiff over numpy arrays.

Every operation builds a node recording its parents and a closure that maps
the output gradient to parent gradients. backward() replays those closures in
exact reverse topological order of the forward pass. Data is float64; single
precision is a caller-side choice and never used by tests or oracles.
"""

import numpy as np

from ..errors import ShapeError
from . import kernels


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False, _parents=(), _backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward_fn = _backward_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Backpropagate from a scalar output through the recorded graph."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar, got shape {self.shape}")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:  # iterative DFS; training graphs can exceed recursion limits
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.accumulate_grad(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    # operator sugar -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(other, mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g, shape):
    """Reduce a gradient back to the shape numpy broadcast it from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _node(data, parents, backward_fn):
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, _parents=tuple(parents),
                  _backward_fn=backward_fn if req else None)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out_data = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"add: {a.shape} vs {b.shape}") from exc

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.shape))

    return _node(out_data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out_data = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"mul: {a.shape} vs {b.shape}") from exc

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.shape))

    return _node(out_data, (a, b), backward)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise ShapeError(f"matmul supports 1-d/2-d operands, got {a.shape}@{b.shape}")
    try:
        out_data = a.data @ b.data
    except ValueError as exc:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}") from exc

    def backward(g):
        if a.ndim == 2 and b.ndim == 2:
            ga, gb = g @ b.data.T, a.data.T @ g
        elif a.ndim == 2 and b.ndim == 1:
            ga, gb = np.outer(g, b.data), a.data.T @ g
        elif a.ndim == 1 and b.ndim == 2:
            ga, gb = b.data @ g, np.outer(a.data, g)
        else:  # dot product
            ga, gb = g * b.data, g * a.data
        if a.requires_grad:
            a.accumulate_grad(ga)
        if b.requires_grad:
            b.accumulate_grad(gb)

    return _node(out_data, (a, b), backward)


def transpose(a):
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got {a.shape}")

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g.T)

    return _node(a.data.T, (a,), backward)


def tanh(a):
    a = as_tensor(a)
    out_data = np.tanh(a.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * (1.0 - out_data * out_data))

    return _node(out_data, (a,), backward)


def _sigmoid(x):
    # exp(-softplus(-x)): stable on both tails
    return np.exp(-np.logaddexp(0.0, -x))


def sigmoid(a):
    a = as_tensor(a)
    out_data = _sigmoid(a.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * out_data * (1.0 - out_data))

    return _node(out_data, (a,), backward)


def softplus(a):
    """log(1 + exp(x)), the stable building block of every BCE loss here."""
    a = as_tensor(a)
    out_data = np.logaddexp(0.0, a.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * _sigmoid(a.data))

    return _node(out_data, (a,), backward)


def tsum(a, axis=None):
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis)

    def backward(g):
        if not a.requires_grad:
            return
        if axis is None:
            a.accumulate_grad(np.broadcast_to(g, a.shape).copy())
        else:
            a.accumulate_grad(np.broadcast_to(np.expand_dims(g, axis), a.shape).copy())

    return _node(out_data, (a,), backward)


def tmean(a, axis=None):
    a = as_tensor(a)
    n = a.data.size if axis is None else a.shape[axis]
    return mul(tsum(a, axis=axis), 1.0 / n)


def logsumexp(a, axis=None):
    """Max-shifted logsumexp; gradient is the softmax along the same axis."""
    a = as_tensor(a)
    if a.data.size == 0:
        raise ShapeError("logsumexp of an empty tensor")
    hi = a.data.max(axis=axis, keepdims=True)
    out_keep = hi + np.log(np.exp(a.data - hi).sum(axis=axis, keepdims=True))
    if axis is None:
        out_data = out_keep.reshape(())
    else:
        out_data = np.squeeze(out_keep, axis=axis)

    def backward(g):
        if not a.requires_grad:
            return
        soft = np.exp(a.data - out_keep)
        if axis is None:
            a.accumulate_grad(g * soft)
        else:
            a.accumulate_grad(np.expand_dims(g, axis) * soft)

    return _node(out_data, (a,), backward)


def maxpool_time(a):
    """Pointwise max over axis 0; gradient routes to the first argmax row."""
    a = as_tensor(a)
    if a.ndim != 2 or a.shape[0] < 1:
        raise ShapeError(f"maxpool_time expects (s,d) with s>=1, got {a.shape}")
    idx = a.data.argmax(axis=0)
    out_data = a.data[idx, np.arange(a.shape[1])]

    def backward(g):
        if a.requires_grad:
            ga = np.zeros_like(a.data)
            ga[idx, np.arange(a.shape[1])] = g
            a.accumulate_grad(ga)

    return _node(out_data, (a,), backward)


def concat(parts, axis=0):
    parts = [as_tensor(p) for p in parts]
    try:
        out_data = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {[p.shape for p in parts]}") from exc
    sizes = [p.shape[axis] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            if p.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                p.accumulate_grad(g[tuple(sl)])

    return _node(out_data, parts, backward)


def stack(parts):
    """Stack 1-d tensors into a matrix, one per row."""
    parts = [as_tensor(p) for p in parts]
    if not parts or any(p.ndim != 1 for p in parts):
        raise ShapeError("stack expects a non-empty list of vectors")
    out_data = np.stack([p.data for p in parts])

    def backward(g):
        for i, p in enumerate(parts):
            if p.requires_grad:
                p.accumulate_grad(g[i])

    return _node(out_data, parts, backward)


def gather_rows(table, idx):
    """Embedding lookup: rows of a (n,d) table; backward scatter-adds."""
    table = as_tensor(table)
    idx = np.asarray(idx, dtype=np.intp)
    if table.ndim != 2:
        raise ShapeError(f"gather_rows expects a matrix table, got {table.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError(f"row index out of range for table with "
                         f"{table.shape[0]} rows")
    out_data = table.data[idx]

    def backward(g):
        if table.requires_grad:
            gt = np.zeros_like(table.data)
            np.add.at(gt, idx, g)
            table.accumulate_grad(gt)

    return _node(out_data, (table,), backward)


def take(a, i):
    """Scalar element pick from a vector."""
    a = as_tensor(a)
    if a.ndim != 1:
        raise ShapeError(f"take expects a vector, got {a.shape}")
    i = int(i)

    def backward(g):
        if a.requires_grad:
            ga = np.zeros_like(a.data)
            ga[i] = g
            a.accumulate_grad(ga)

    return _node(a.data[i], (a,), backward)


def dropout_mask(shape, keep_prob, rng):
    """Inverted dropout mask: entries are 0 or 1/keep_prob."""
    if not 0.0 < keep_prob <= 1.0:
        raise ShapeError(f"keep_prob must be in (0,1], got {keep_prob}")
    return (rng.random(shape) < keep_prob).astype(np.float64) / keep_prob


def dropout(a, keep_prob, rng, training):
    """Apply inverted dropout during training; identity at evaluation."""
    if not training or keep_prob >= 1.0:
        return as_tensor(a)
    return mul(a, dropout_mask(as_tensor(a).shape, keep_prob, rng))


def conv1d_tanh(M, W, b):
    """Fused centered conv1d + tanh; forward/backward via the kernel module."""
    M, W, b = as_tensor(M), as_tensor(W), as_tensor(b)
    out_data = kernels.conv1d_tanh_forward(M.data, W.data, b.data)

    def backward(g):
        dM, dW, db = kernels.conv1d_tanh_backward(M.data, W.data, out_data, g)
        if M.requires_grad:
            M.accumulate_grad(dM)
        if W.requires_grad:
            W.accumulate_grad(dW)
        if b.requires_grad:
            b.accumulate_grad(db)

    return _node(out_data, (M, W, b), backward)
