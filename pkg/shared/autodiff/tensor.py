"""Array-valued reverse-mode differentiation.

Each Tensor stores its float64 value, the parents it was computed from and a
closure that pushes its gradient back onto them. Only the operations the
reconstruction models need are provided: elementwise arithmetic with numpy
broadcasting, reductions, slicing, 2-D convolution, smooth activations, the
absolute value and generic linear maps (forward models).
"""

from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from shared.exceptions import NonFiniteError, ValidationError

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]


class Tensor:
    """A node of the computation graph"""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        op: str = "leaf",
        parents: Tuple["Tensor", ...] = (),
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents = parents
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    # ------------------------------------------------------------------ basics

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ValidationError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def __repr__(self) -> str:
        return f"Tensor(op={self.op!r}, shape={self.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    # --------------------------------------------------------------- operators

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

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)

    def sum(self, axis=None, keepdims: bool = False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return reduce_mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _node(data: np.ndarray, op: str, parents: Iterable[Tensor], backward) -> Tensor:
    """Create an output node, failing loudly on non-finite values"""
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite value produced by operation '{op}'", node=op)
    parents = tuple(parents)
    requires_grad = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=requires_grad, op=op, parents=parents if requires_grad else ())
    if requires_grad:
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum g down to shape, undoing numpy broadcasting"""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ------------------------------------------------------------------ arithmetic

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _node(a.data + b.data, "add", (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _node(a.data - b.data, "sub", (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _node(a.data * b.data, "mul", (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _node(a.data / b.data, "div", (a, b), backward)


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        a._accumulate(g * exponent * a.data ** (exponent - 1))

    return _node(a.data ** exponent, f"pow{exponent:g}", (a,), backward)


def matmul(a, b) -> Tensor:
    """Matrix product for (m, k) @ (k,) and (m, k) @ (k, p)"""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim not in (1, 2):
        raise ValidationError(f"matmul supports 2-D @ 1-D/2-D, got {a.shape} @ {b.shape}")

    def backward(g):
        if b.ndim == 1:
            if a.requires_grad:
                a._accumulate(np.outer(g, b.data))
            if b.requires_grad:
                b._accumulate(a.data.T @ g)
        else:
            if a.requires_grad:
                a._accumulate(g @ b.data.T)
            if b.requires_grad:
                b._accumulate(a.data.T @ g)

    return _node(a.data @ b.data, "matmul", (a, b), backward)


# ------------------------------------------------------------------ reductions

def _expand(g: np.ndarray, shape: Tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(ax % len(shape) for ax in axes)
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        a._accumulate(_expand(g, a.shape, axis, keepdims))

    return _node(np.sum(a.data, axis=axis, keepdims=keepdims), "sum", (a,), backward)


def reduce_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size // max(np.sum(a.data, axis=axis, keepdims=keepdims).size, 1)

    def backward(g):
        a._accumulate(_expand(g, a.shape, axis, keepdims) / count)

    return _node(np.mean(a.data, axis=axis, keepdims=keepdims), "mean", (a,), backward)


# ------------------------------------------------------------------- reshaping

def take(a, key) -> Tensor:
    """Basic (slice/int) indexing"""
    a = as_tensor(a)

    def backward(g):
        full = np.zeros_like(a.data)
        full[key] += g
        a._accumulate(full)

    return _node(np.array(a.data[key], copy=True), "getitem", (a,), backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        a._accumulate(g.reshape(a.shape))

    return _node(a.data.reshape(shape), "reshape", (a,), backward)


# ------------------------------------------------------------------ pointwise

def absolute(a) -> Tensor:
    """|a| with subgradient 0 at the kink"""
    a = as_tensor(a)

    def backward(g):
        a._accumulate(g * np.sign(a.data))

    return _node(np.abs(a.data), "abs", (a,), backward)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.tanh(a.data)

    def backward(g):
        a._accumulate(g * (1.0 - out_data * out_data))

    return _node(out_data, "tanh", (a,), backward)


def softplus(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        a._accumulate(g * expit(a.data))

    return _node(np.logaddexp(0.0, a.data), "softplus", (a,), backward)


ACTIVATIONS = {"tanh": tanh, "softplus": softplus}


# ------------------------------------------------------------------ linear maps

def conv2d(x, weight, bias) -> Tensor:
    """Zero-padded 'same' convolution.

    x: (B, C_in, n, n), weight: (C_out, C_in, k, k), bias: (C_out,).
    """
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ValidationError(f"conv2d shape mismatch: input {x.shape}, weight {weight.shape}")
    k = weight.shape[-1]
    pad = k // 2
    n_rows, n_cols = x.shape[2], x.shape[3]
    padded = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    patches = sliding_window_view(padded, (k, k), axis=(2, 3))
    out = np.einsum("bcijuv,ocuv->boij", patches, weight.data, optimize=True)
    out = out + bias.data[None, :, None, None]

    def backward(g):
        if weight.requires_grad:
            weight._accumulate(np.einsum("bcijuv,boij->ocuv", patches, g, optimize=True))
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            g_patches = np.einsum("boij,ocuv->bcijuv", g, weight.data, optimize=True)
            g_padded = np.zeros_like(padded)
            for u in range(k):
                for v in range(k):
                    g_padded[:, :, u:u + n_rows, v:v + n_cols] += g_patches[..., u, v]
            x._accumulate(g_padded[:, :, pad:pad + n_rows, pad:pad + n_cols])

    return _node(out, "conv2d", (x, weight, bias), backward)


def linear_map(
    x,
    forward: Callable[[np.ndarray], np.ndarray],
    adjoint: Callable[[np.ndarray], np.ndarray],
    name: str = "linear_map",
) -> Tensor:
    """Apply a linear operator whose exact adjoint is supplied"""
    x = as_tensor(x)

    def backward(g):
        x._accumulate(adjoint(g))

    return _node(forward(x.data), name, (x,), backward)


# -------------------------------------------------------------------- backprop

def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(node) into .grad of every node that requires it"""
    if root.data.size != 1:
        raise ValidationError(f"backward needs a scalar output, got shape {root.shape}")
    if not root.requires_grad:
        return
    root._accumulate(np.ones_like(root.data))
    for node in reversed(_topological_order(root)):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
