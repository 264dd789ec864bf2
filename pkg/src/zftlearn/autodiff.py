"""Minimal reverse-mode automatic differentiation on numpy arrays.

Just enough machinery for a small Transformer: broadcasting elementwise
arithmetic, batched matmul, reshape/transpose, reductions, row gather, and
fused layer-norm / softmax / GELU primitives (fused to keep graphs short).
Everything runs in float64 and is deterministic: gradients accumulate in
graph construction order, so identical op sequences give bit-identical
results.

Not thread-safe during graph construction; build and differentiate a graph
from a single thread.
"""

from __future__ import annotations

import numpy as np

_GELU_C = np.sqrt(2.0 / np.pi)


def _reduce_grad(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcasted gradient back down to the original shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """Node in the computation graph wrapping a float64 ndarray."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=float)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def _accum(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Backpropagate from this (scalar) tensor through the graph."""
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- elementwise -------------------------------------------------------

    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = _node(self.data + other.data, (self, other))

        def bwd(g):
            self._accum(_reduce_grad(g, self.data.shape))
            other._accum(_reduce_grad(g, other.data.shape))

        out._backward = bwd
        return out

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = _node(self.data - other.data, (self, other))

        def bwd(g):
            self._accum(_reduce_grad(g, self.data.shape))
            other._accum(_reduce_grad(-g, other.data.shape))

        out._backward = bwd
        return out

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = _node(self.data * other.data, (self, other))

        def bwd(g):
            self._accum(_reduce_grad(g * other.data, self.data.shape))
            other._accum(_reduce_grad(g * self.data, other.data.shape))

        out._backward = bwd
        return out

    __radd__ = __add__
    __rmul__ = __mul__

    def __matmul__(self, other):
        out = _node(np.matmul(self.data, other.data), (self, other))

        def bwd(g):
            self._accum(
                _reduce_grad(np.matmul(g, np.swapaxes(other.data, -1, -2)), self.data.shape)
            )
            other._accum(
                _reduce_grad(np.matmul(np.swapaxes(self.data, -1, -2), g), other.data.shape)
            )

        out._backward = bwd
        return out

    # -- shape -------------------------------------------------------------

    def reshape(self, *shape):
        src = self.data.shape
        out = _node(self.data.reshape(*shape), (self,))
        out._backward = lambda g: self._accum(g.reshape(src))
        return out

    def transpose(self, *axes):
        inv = np.argsort(axes)
        out = _node(self.data.transpose(*axes), (self,))
        out._backward = lambda g: self._accum(g.transpose(*inv))
        return out

    # -- reductions --------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = _node(self.data.sum(axis=axis, keepdims=keepdims), (self,))

        def bwd(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accum(np.broadcast_to(g, self.data.shape).copy())

        out._backward = bwd
        return out

    def mean(self):
        n = self.data.size
        out = _node(np.asarray(self.data.mean()), (self,))
        out._backward = lambda g: self._accum(np.full_like(self.data, g / n))
        return out


def _node(data: np.ndarray, parents: tuple) -> Tensor:
    t = Tensor.__new__(Tensor)
    t.data = data
    t.grad = None
    t.requires_grad = False
    t._parents = parents
    t._backward = None
    return t


def gather_rows(table: Tensor, idx: np.ndarray) -> Tensor:
    """Select rows of a 2-D table by integer index; scatter-add backward."""
    idx = np.asarray(idx)
    out = _node(table.data[idx], (table,))

    def bwd(g):
        acc = np.zeros_like(table.data)
        np.add.at(acc, idx, g)
        table._accum(acc)

    out._backward = bwd
    return out


def gelu(x: Tensor) -> Tensor:
    """GELU with the tanh approximation (exact enough, cheap derivative)."""
    d = x.data
    inner = _GELU_C * (d + 0.044715 * d**3)
    t = np.tanh(inner)
    out = _node(0.5 * d * (1.0 + t), (x,))

    def bwd(g):
        di = _GELU_C * (1.0 + 3 * 0.044715 * d * d)
        x._accum(g * (0.5 * (1.0 + t) + 0.5 * d * (1.0 - t * t) * di))

    out._backward = bwd
    return out


def softmax_last(x: Tensor) -> Tensor:
    """Numerically stable softmax over the last axis."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)
    out = _node(s, (x,))

    def bwd(g):
        x._accum(s * (g - (g * s).sum(axis=-1, keepdims=True)))

    out._backward = bwd
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Layer normalization over the last axis with learned gain and bias."""
    d = x.data
    mu = d.mean(axis=-1, keepdims=True)
    xc = d - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = _node(xhat * gain.data + bias.data, (x, gain, bias))
    n = d.shape[-1]

    def bwd(g):
        gain._accum(_reduce_grad(g * xhat, gain.data.shape))
        bias._accum(_reduce_grad(g, bias.data.shape))
        gy = g * gain.data
        x._accum(
            inv
            * (
                gy
                - gy.mean(axis=-1, keepdims=True)
                - xhat * (gy * xhat).mean(axis=-1, keepdims=True)
            )
        )

    out._backward = bwd
    return out


class Adam:
    """Adaptive moment estimation with global gradient-norm clipping."""

    def __init__(self, params: list[Tensor], lr: float = 1e-4, clip_norm: float = 1.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.clip_norm = clip_norm
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        if self.clip_norm is not None:
            total = np.sqrt(sum(float((g * g).sum()) for g in grads))
            if total > self.clip_norm:
                scale = self.clip_norm / total
                grads = [g * scale for g in grads]
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
