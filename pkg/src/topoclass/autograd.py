"""Dense float64 tensors with reverse-mode gradients.

Only the operations the two graph networks need are provided. The op graph
is recorded on every forward pass and discarded after ``backward``.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class NonFiniteError(FloatingPointError):
    pass


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(self.value)):
            raise NonFiniteError("non-finite values in tensor")
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        """Populate ``.grad`` on every tensor this scalar depends on."""
        if self.value.size != 1:
            raise ValueError(f"backward needs a scalar, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            stack.extend((p, False) for p in node._parents if p.requires_grad)
        grads = {id(self): np.ones_like(self.value)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg

    # operator sugar
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

    def sum(self):
        return tensor_sum(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(value, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.value = value
    if not np.all(np.isfinite(value)):
        raise NonFiniteError("operation produced non-finite values")
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and reductions

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.value + b.value, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.value * b.value, (a, b),
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
    )


def tensor_sum(a: Tensor) -> Tensor:
    return _result(np.array(a.value.sum()), (a,), lambda g: (np.full(a.shape, float(g)),))


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0
    return _result(a.value * mask, (a,), lambda g: (g * mask,))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    scale = np.where(a.value > 0, 1.0, slope)
    return _result(a.value * scale, (a,), lambda g: (g * scale,))


def elu(a: Tensor, alpha: float = 1.0) -> Tensor:
    neg = a.value <= 0
    ex = alpha * np.expm1(np.minimum(a.value, 0.0))
    out = np.where(neg, ex, a.value)
    return _result(out, (a,), lambda g: (g * np.where(neg, ex + alpha, 1.0),))


def log_softmax_rows(a: Tensor) -> Tensor:
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    probs = np.exp(out)

    def backward(g):
        return (g - probs * g.sum(axis=1, keepdims=True),)

    return _result(out, (a,), backward)


def nll_loss(log_probs: Tensor, targets, mask) -> Tensor:
    """Mean negative log-likelihood of ``targets`` over the nodes in ``mask``."""
    idx = np.asarray(mask)
    if idx.dtype == bool:
        idx = np.flatnonzero(idx)
    if len(idx) == 0:
        raise ValueError("no training nodes")
    t = np.asarray(targets)[idx]
    n = len(idx)

    def backward(g):
        out = np.zeros(log_probs.shape)
        np.add.at(out, (idx, t), -float(g) / n)
        return (out,)

    return _result(np.array(-log_probs.value[idx, t].mean()), (log_probs,), backward)


# ---------------------------------------------------------------------------
# products

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return _result(a.value @ b.value, (a, b), lambda g: (g @ b.value.T, a.value.T @ g))


def spmm(s, h: Tensor) -> Tensor:
    """Constant sparse matrix times dense tensor; ``s`` may be a
    :class:`~topoclass.graph.NormalizedAdjacency` or any scipy sparse matrix."""
    m = s.matrix if hasattr(s, "matrix") else sp.csr_matrix(s)
    h = as_tensor(h)
    if h.value.ndim != 2 or m.shape[1] != h.shape[0]:
        raise ValueError(f"spmm shape mismatch: {m.shape} @ {h.shape}")
    mt = m.T.tocsr()
    return _result(np.asarray(m @ h.value), (h,), lambda g: (np.asarray(mt @ g),))


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    n = a.shape[0]

    def backward(g):
        sel = sp.csr_matrix((np.ones(len(idx)), (idx, np.arange(len(idx)))), shape=(n, len(idx)))
        return (np.asarray(sel @ g),)

    return _result(a.value[idx], (a,), backward)


def concat_columns(parts: Sequence[Tensor]) -> Tensor:
    widths = np.cumsum([p.shape[1] for p in parts])[:-1]
    return _result(
        np.concatenate([p.value for p in parts], axis=1), tuple(parts),
        lambda g: tuple(np.split(g, widths, axis=1)),
    )


def mean_heads(a: Tensor, heads: int) -> Tensor:
    """Average the ``heads`` equal-width column blocks of ``a``."""
    n, width = a.shape
    if width % heads:
        raise ValueError(f"width {width} not divisible by {heads} heads")
    f = width // heads
    out = a.value.reshape(n, heads, f).mean(axis=1)
    return _result(out, (a,), lambda g: (np.tile(g / heads, (1, heads)),))


# ---------------------------------------------------------------------------
# attention over graph neighbourhoods

def head_scores(m: Tensor, a: Tensor) -> Tensor:
    """Per-head dot products: ``out[n, h] = <m[n, h-th block], a[h]>``.

    ``m`` is ``N x (H*F)`` and ``a`` is ``H x F``.
    """
    heads, f = a.shape
    n = m.shape[0]
    mv = m.value.reshape(n, heads, f)
    out = np.einsum("nhf,hf->nh", mv, a.value)

    def backward(g):
        gm = (g[:, :, None] * a.value[None, :, :]).reshape(n, heads * f)
        ga = np.einsum("nh,nhf->hf", g, mv)
        return gm, ga

    return _result(out, (m, a), backward)


def segment_softmax(e: Tensor, indptr: np.ndarray) -> Tensor:
    """Softmax of each column of ``e`` within the CSR row segments ``indptr``."""
    counts = np.diff(indptr)
    if np.any(counts == 0):
        raise ValueError("attention over empty set")
    rows = np.repeat(np.arange(len(counts)), counts)
    starts = indptr[:-1]
    peak = np.maximum.reduceat(e.value, starts, axis=0)
    ex = np.exp(e.value - peak[rows])
    alpha = ex / np.add.reduceat(ex, starts, axis=0)[rows]

    def backward(g):
        inner = np.add.reduceat(alpha * g, starts, axis=0)
        return (alpha * (g - inner[rows]),)

    return _result(alpha, (e,), backward)


def edge_aggregate(alpha: Tensor, m: Tensor, indptr: np.ndarray, indices: np.ndarray) -> Tensor:
    """Attention-weighted neighbour sums, one per head.

    ``out[i, h-th block] = sum_e alpha[e, h] * m[indices[e], h-th block]``
    over the edges ``e`` of row ``i``.
    """
    n = len(indptr) - 1
    heads = alpha.shape[1]
    f = m.shape[1] // heads
    rows = np.repeat(np.arange(n), np.diff(indptr))
    mats = [sp.csr_matrix((alpha.value[:, h], indices, indptr), shape=(n, m.shape[0]))
            for h in range(heads)]
    blocks = [slice(h * f, (h + 1) * f) for h in range(heads)]
    out = np.concatenate([mats[h] @ m.value[:, blocks[h]] for h in range(heads)], axis=1)

    def backward(g):
        galpha = np.empty(alpha.shape)
        gm = np.empty(m.shape)
        for h, blk in enumerate(blocks):
            galpha[:, h] = np.einsum("ef,ef->e", g[rows, blk], m.value[indices, blk])
            gm[:, blk] = mats[h].T @ g[:, blk]
        return galpha, gm

    return _result(out, (alpha, m), backward)


# ---------------------------------------------------------------------------
# parameters and optimisation

def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    shape = (fan_in, fan_out) if shape is None else shape
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True)


class Adam:
    """Adam with bias correction; one instance per training run."""

    def __init__(self, params: Iterable[Tensor], lr: float = 0.01,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.step_count += 1
        c1 = 1.0 - self.beta1 ** self.step_count
        c2 = 1.0 - self.beta2 ** self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad ** 2
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
