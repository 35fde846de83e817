"""Minimal reverse-mode automatic differentiation over numpy arrays.

Just the operations the summarizer needs: elementwise arithmetic, matmul,
tanh/sigmoid, slicing/concat, embedding lookup, softmax and fused
softmax-cross-entropy. Float64 throughout; gradients are exact analytic
derivatives, verified against finite differences in the test suite.
"""
import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "parents", "bwd")

    def __init__(self, data, parents=(), bwd=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.bwd = bwd

    @property
    def shape(self):
        return self.data.shape

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return narrow(self, idx)

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for t in order:
            if t.bwd is not None:
                t.bwd(t.grad)


def _toposort(root):
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))
    for t in order:
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
    return list(reversed(order))


def _accum(t, g):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g, shape):
    # sum out broadcast dimensions to recover a grad of the given shape
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def constant(x):
    return Tensor(x)


def add(a, b):
    out = Tensor(a.data + b.data, (a, b))

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))
    out.bwd = bwd
    return out


def mul(a, b):
    out = Tensor(a.data * b.data, (a, b))

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))
    out.bwd = bwd
    return out


def scale(a, s):
    out = Tensor(a.data * s, (a,))
    out.bwd = lambda g: _accum(a, g * s)
    return out


def matmul(a, b):
    out = Tensor(a.data @ b.data, (a, b))

    def bwd(g):
        ga = g @ b.data.T if b.data.ndim == 2 else np.outer(g, b.data)
        gb = a.data.T @ g
        _accum(a, ga.reshape(a.data.shape))
        _accum(b, gb.reshape(b.data.shape))
    out.bwd = bwd
    return out


def tanh(a):
    y = np.tanh(a.data)
    out = Tensor(y, (a,))
    out.bwd = lambda g: _accum(a, g * (1.0 - y * y))
    return out


def sigmoid(a):
    y = 1.0 / (1.0 + np.exp(-a.data))
    out = Tensor(y, (a,))
    out.bwd = lambda g: _accum(a, g * y * (1.0 - y))
    return out


def narrow(a, idx):
    out = Tensor(a.data[idx], (a,))

    def bwd(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        _accum(a, full)
    out.bwd = bwd
    return out


def concat(tensors, axis=0):
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis),
                 tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]

    def bwd(g):
        offset = 0
        for t, n in zip(tensors, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offset, offset + n)
            _accum(t, g[tuple(sl)])
            offset += n
    out.bwd = bwd
    return out


def reshape(a, shape):
    out = Tensor(a.data.reshape(shape), (a,))
    out.bwd = lambda g: _accum(a, g.reshape(a.data.shape))
    return out


def sum_(a, axis=None, keepdims=False):
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims), (a,))

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape).copy())
    out.bwd = bwd
    return out


def mean(a, axis=None):
    n = a.data.size if axis is None else a.data.shape[axis]
    return scale(sum_(a, axis=axis), 1.0 / n)


def embedding(table, ids):
    """Row lookup into a parameter matrix; scatter-add on backward."""
    ids = np.asarray(ids, dtype=np.int64)
    out = Tensor(table.data[ids], (table,))

    def bwd(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        _accum(table, full)
    out.bwd = bwd
    return out


def softmax(a, axis=-1):
    x = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(x)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y, (a,))

    def bwd(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        _accum(a, y * (g - dot))
    out.bwd = bwd
    return out


def cross_entropy(logits, targets):
    """Mean negative log likelihood of target ids under row-wise softmax.

    logits: (n, V); targets: (n,) int ids. Returns a scalar Tensor.
    """
    targets = np.asarray(targets, dtype=np.int64)
    n = logits.data.shape[0]
    x = logits.data - logits.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(x).sum(axis=1))
    nll = logz - x[np.arange(n), targets]
    out = Tensor(nll.mean(), (logits,))

    def bwd(g):
        probs = np.exp(x - logz[:, None])
        probs[np.arange(n), targets] -= 1.0
        _accum(logits, float(g) * probs / n)
    out.bwd = bwd
    return out


def log_softmax_np(logits):
    """Plain-numpy log softmax for inference paths (no tape)."""
    x = logits - logits.max(axis=-1, keepdims=True)
    return x - np.log(np.exp(x).sum(axis=-1, keepdims=True))


def dropout(a, rate, rng):
    """Inverted dropout; pass rng=None (or rate 0) to disable."""
    if rng is None or rate <= 0.0:
        return a
    mask = (rng.random(a.data.shape) >= rate) / (1.0 - rate)
    out = Tensor(a.data * mask, (a,))
    out.bwd = lambda g: _accum(a, g * mask)
    return out
