"""A small reverse-mode autodiff engine over dense numpy arrays.

Only two kinds of broadcasting are allowed between operands: a scalar
against any tensor, and a trailing channel axis of size 1 against size 3
(a 1-channel transmission map against an RGB image).  Any other shape
mismatch raises, because silent broadcasting tends to hide wrong
gradients.

Images flowing through :func:`conv2d` are ``(H, W, C)``; kernels are
``(C_out, C_in, 3, 3)``.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "tensor",
    "add",
    "sub",
    "mul",
    "scalar_mul",
    "exp",
    "log",
    "abs",
    "square",
    "relu",
    "clamp",
    "conv2d",
    "bias_add",
    "sum",
    "mean",
    "backward",
]


class ShapeError(ValueError):
    pass


class Tensor:
    """A node in the computation graph.

    ``grad`` starts at zero and accumulates ``d(sink)/d(self)`` during
    :func:`backward`.
    """

    __slots__ = ("value", "grad", "parents", "_backward", "op")

    def __init__(self, value, parents=(), backward_fn=None, op="leaf"):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.parents = tuple(parents)
        self._backward = backward_fn
        self.op = op

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scalar_mul(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scalar_mul(self, -1.0)


def tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _check_broadcast(a: np.ndarray, b: np.ndarray):
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    if (
        a.ndim == b.ndim
        and a.shape[:-1] == b.shape[:-1]
        and {a.shape[-1], b.shape[-1]} == {1, 3}
    ):
        return
    raise ShapeError(f"incompatible shapes {a.shape} and {b.shape}")


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if len(shape) == 0:
        return np.asarray(grad.sum())
    # channel broadcast 1 -> 3
    return grad.sum(axis=-1, keepdims=True)


def _binary(a, b, fwd, grad_a, grad_b, op):
    a, b = tensor(a), tensor(b)
    _check_broadcast(a.value, b.value)
    out = Tensor(fwd(a.value, b.value), (a, b), op=op)

    def back(g):
        a.grad = a.grad + _unbroadcast(grad_a(g, a.value, b.value), a.shape)
        b.grad = b.grad + _unbroadcast(grad_b(g, a.value, b.value), b.shape)

    out._backward = back
    return out


def add(a, b) -> Tensor:
    return _binary(a, b, np.add, lambda g, x, y: g, lambda g, x, y: g, "add")


def sub(a, b) -> Tensor:
    return _binary(a, b, np.subtract, lambda g, x, y: g, lambda g, x, y: -g, "sub")


def mul(a, b) -> Tensor:
    return _binary(
        a, b, np.multiply, lambda g, x, y: g * y, lambda g, x, y: g * x, "mul"
    )


def _unary(a, value, local_grad, op):
    a = tensor(a)
    out = Tensor(value, (a,), op=op)

    def back(g):
        a.grad = a.grad + g * local_grad()

    out._backward = back
    return out


def scalar_mul(a, c: float) -> Tensor:
    a = tensor(a)
    c = float(c)
    return _unary(a, a.value * c, lambda: c, "scalar_mul")


def exp(a) -> Tensor:
    a = tensor(a)
    v = np.exp(a.value)
    return _unary(a, v, lambda: v, "exp")


def log(a) -> Tensor:
    a = tensor(a)
    if np.any(a.value <= 0):
        raise ValueError("log of non-positive value")
    return _unary(a, np.log(a.value), lambda: 1.0 / a.value, "log")


def abs(a) -> Tensor:  # noqa: A001 - mirrors the op name
    a = tensor(a)
    # np.sign(0) == 0 gives the zero subgradient at the kink
    return _unary(a, np.abs(a.value), lambda: np.sign(a.value), "abs")


def square(a) -> Tensor:
    a = tensor(a)
    return _unary(a, a.value * a.value, lambda: 2.0 * a.value, "square")


def relu(a) -> Tensor:
    a = tensor(a)
    return _unary(a, np.maximum(a.value, 0.0), lambda: (a.value > 0).astype(np.float64), "relu")


def clamp(a, lo: float, hi: float) -> Tensor:
    """Clip to ``[lo, hi]``; gradient is passed only strictly inside the range."""
    if not lo < hi:
        raise ValueError(f"clamp requires lo < hi, got {lo}, {hi}")
    a = tensor(a)
    mask = ((a.value > lo) & (a.value < hi)).astype(np.float64)
    return _unary(a, np.clip(a.value, lo, hi), lambda: mask, "clamp")


def _pad_replicate(x: np.ndarray) -> np.ndarray:
    return np.pad(x, ((1, 1), (1, 1), (0, 0)), mode="edge")


def _unpad_replicate(gp: np.ndarray) -> np.ndarray:
    # fold the gradient of the replicated border back onto the edge pixels
    g = gp[1:-1, 1:-1].copy()
    g[0] += gp[0, 1:-1]
    g[-1] += gp[-1, 1:-1]
    g[:, 0] += gp[1:-1, 0]
    g[:, -1] += gp[1:-1, -1]
    g[0, 0] += gp[0, 0]
    g[0, -1] += gp[0, -1]
    g[-1, 0] += gp[-1, 0]
    g[-1, -1] += gp[-1, -1]
    return g


def conv2d(x, kernel) -> Tensor:
    """3x3 convolution (cross-correlation), stride 1, replicate padding."""
    x, kernel = tensor(x), tensor(kernel)
    if x.value.ndim != 3:
        raise ShapeError(f"conv2d input must be HxWxC, got {x.shape}")
    if kernel.value.ndim != 4 or kernel.shape[2:] != (3, 3):
        raise ShapeError(f"kernel must be (C_out, C_in, 3, 3), got {kernel.shape}")
    if kernel.shape[1] != x.shape[2]:
        raise ShapeError(f"kernel expects {kernel.shape[1]} input channels, got {x.shape[2]}")
    h, w, c_in = x.shape
    c_out = kernel.shape[0]
    xp = _pad_replicate(x.value)
    k = kernel.value
    acc = np.zeros((h * w, c_out))
    for di in range(3):
        for dj in range(3):
            patch = xp[di : di + h, dj : dj + w].reshape(h * w, c_in)
            acc += patch @ k[:, :, di, dj].T
    out = Tensor(acc.reshape(h, w, c_out), (x, kernel), op="conv2d")

    def back(g):
        g2 = g.reshape(h * w, c_out)
        gk = np.empty_like(k)
        gp = np.zeros_like(xp)
        for di in range(3):
            for dj in range(3):
                patch = xp[di : di + h, dj : dj + w].reshape(h * w, c_in)
                gk[:, :, di, dj] = g2.T @ patch
                gp[di : di + h, dj : dj + w] += (g2 @ k[:, :, di, dj]).reshape(h, w, c_in)
        kernel.grad = kernel.grad + gk
        x.grad = x.grad + _unpad_replicate(gp)

    out._backward = back
    return out


def bias_add(x, bias) -> Tensor:
    """Add a per-channel bias vector to an ``(H, W, C)`` tensor."""
    x, bias = tensor(x), tensor(bias)
    if bias.value.ndim != 1 or bias.shape[0] != x.shape[-1]:
        raise ShapeError(f"bias shape {bias.shape} does not match channels {x.shape[-1]}")
    out = Tensor(x.value + bias.value, (x, bias), op="bias_add")

    def back(g):
        x.grad = x.grad + g
        bias.grad = bias.grad + g.reshape(-1, g.shape[-1]).sum(axis=0)

    out._backward = back
    return out


def sum(a) -> Tensor:  # noqa: A001
    a = tensor(a)
    out = Tensor(a.value.sum(), (a,), op="sum")

    def back(g):
        a.grad = a.grad + np.broadcast_to(g, a.shape)

    out._backward = back
    return out


def mean(a) -> Tensor:
    a = tensor(a)
    n = a.value.size
    out = Tensor(a.value.mean(), (a,), op="mean")

    def back(g):
        a.grad = a.grad + np.broadcast_to(g / n, a.shape)

    out._backward = back
    return out


def _topological(sink: Tensor):
    order, seen = [], set()
    stack = [(sink, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(sink: Tensor):
    """Populate ``grad`` on every node reachable from the scalar ``sink``.

    Returns the tape: the recorded nodes in topological order, parents first.
    """
    if sink.value.ndim != 0 and sink.value.size != 1:
        raise ShapeError(f"backward requires a scalar sink, got shape {sink.shape}")
    tape = _topological(sink)
    sink.grad = np.ones_like(sink.value)
    for node in reversed(tape):
        if node._backward is not None:
            node._backward(node.grad)
    return tape
