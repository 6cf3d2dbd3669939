"""Dense float64 tensors with a reverse-mode gradient tape.

Every op returns a new immutable ``Tensor`` that remembers its parents and a
closure mapping the upstream gradient to gradients for each parent. Calling
:func:`backward` on a scalar walks the recorded graph in reverse topological
order and returns a :class:`Gradients` map keyed by leaf tensor.
"""

from __future__ import annotations

import os
from typing import Callable, Iterable, Sequence

import numpy as np

# Finite checks after every forward op are opt-in; they cost a full pass per op.
DEBUG = bool(os.environ.get("SCLROBUST_DEBUG"))

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "op", "_parents", "_backward", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        arr.setflags(write=False)
        self.data = arr
        self.requires_grad = requires_grad
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: tuple["Tensor", ...], backward: BackwardFn, op: str) -> "Tensor":
        out = cls.__new__(cls)
        arr = np.asarray(data, dtype=np.float64)
        if arr.flags.writeable:
            arr.setflags(write=False)
        if DEBUG and not np.all(np.isfinite(arr)):
            raise FloatingPointError(f"non-finite values produced by {op}")
        out.data = arr
        out.op = op
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.shape[0]

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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _is_scalar(t: Tensor) -> bool:
    return t.ndim == 0


def _check_elementwise(a: Tensor, b: Tensor, name: str) -> None:
    if a.shape != b.shape and not (_is_scalar(a) or _is_scalar(b)):
        raise ShapeError(f"{name}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(g: np.ndarray, t: Tensor) -> np.ndarray:
    # Only scalar-vs-tensor broadcasting exists, so reduction is all-or-nothing.
    if g.shape == t.shape:
        return g
    return np.asarray(g.sum())


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise(a, b, "add")

    def backward(g):
        return _reduce_to(g, a), _reduce_to(g, b)

    return Tensor._from_op(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise(a, b, "sub")

    def backward(g):
        return _reduce_to(g, a), _reduce_to(-g, b)

    return Tensor._from_op(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise(a, b, "mul")

    def backward(g):
        return _reduce_to(g * b.data, a), _reduce_to(g * a.data, b)

    return Tensor._from_op(a.data * b.data, (a, b), backward, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return Tensor._from_op(a.data * c, (a,), lambda g: (g * c,), "scale")


def neg(a: Tensor) -> Tensor:
    return Tensor._from_op(-a.data, (a,), lambda g: (-g,), "neg")


def relu(a: Tensor) -> Tensor:
    # Strict inequality: the subgradient at exactly 0 is 0.
    active = a.data > 0
    return Tensor._from_op(np.where(active, a.data, 0.0), (a,), lambda g: (g * active,), "relu")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return Tensor._from_op(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise ValueError(f"log of non-positive value (min {a.data.min()!r})")
    return Tensor._from_op(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor._from_op(a.data @ b.data, (a, b), backward, "matmul")


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {a.shape}")
    return Tensor._from_op(a.data.T, (a,), lambda g: (g.T,), "transpose")


def bias_add(x: Tensor, b: Tensor) -> Tensor:
    """Add a per-feature bias ``b`` of shape ``(n,)`` along axis 1 of ``x``."""
    if b.ndim != 1 or x.ndim < 2 or x.shape[1] != b.shape[0]:
        raise ShapeError(f"bias_add: incompatible shapes {x.shape} and {b.shape}")
    view = (1, -1) + (1,) * (x.ndim - 2)
    axes = (0,) + tuple(range(2, x.ndim))

    def backward(g):
        return g, g.sum(axis=axes)

    return Tensor._from_op(x.data + b.data.reshape(view), (x, b), backward, "bias_add")


def conv2d(x: Tensor, w: Tensor, bias: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of ``x`` (B, C, H, W) with ``w`` (O, C, kh, kw), zero padding."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: incompatible shapes {x.shape} and {w.shape}")
    if stride < 1 or pad < 0:
        raise ValueError(f"conv2d: invalid stride={stride} or pad={pad}")
    B, C, H, W = x.shape
    O, _, kh, kw = w.shape
    Hp, Wp = H + 2 * pad, W + 2 * pad
    if kh > Hp or kw > Wp:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {Hp}x{Wp}")
    Ho = (Hp - kh) // stride + 1
    Wo = (Wp - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride][:, :, :Ho, :Wo]
    out = np.tensordot(windows, w.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        if bias.shape != (O,):
            raise ShapeError(f"conv2d: bias shape {bias.shape} does not match {O} output channels")
        out = out + bias.data.reshape(1, O, 1, 1)

    def backward(g):
        gw = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        gxp = np.zeros((B, C, Hp, Wp))
        for i in range(kh):
            for j in range(kw):
                contrib = np.tensordot(g, w.data[:, :, i, j], axes=([1], [0]))
                gxp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += contrib.transpose(0, 3, 1, 2)
        gx = gxp[:, :, pad:pad + H, pad:pad + W] if pad else gxp
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    parents = (x, w) if bias is None else (x, w, bias)
    return Tensor._from_op(out, parents, backward, "conv2d")


# ---------------------------------------------------------------------------
# reductions and shape
# ---------------------------------------------------------------------------

def _check_axis(a: Tensor, axis) -> None:
    if axis is None:
        return
    for ax in np.atleast_1d(axis):
        if not -a.ndim <= ax < a.ndim:
            raise ValueError(f"invalid axis {axis} for shape {a.shape}")


def sum(a: Tensor, axis: int | tuple[int, ...] | None = None) -> Tensor:  # noqa: A001
    _check_axis(a, axis)
    out = a.data.sum(axis=axis)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor._from_op(out, (a,), backward, "sum")


def mean(a: Tensor, axis: int | tuple[int, ...] | None = None) -> Tensor:
    _check_axis(a, axis)
    count = a.size if axis is None else int(np.prod([a.shape[ax] for ax in np.atleast_1d(axis)]))
    return scale(sum(a, axis), 1.0 / count)


def global_avg_pool(x: Tensor) -> Tensor:
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool expects (B, C, H, W), got {x.shape}")
    return mean(x, axis=(2, 3))


def concat_rows(*tensors: Tensor) -> Tensor:
    if not tensors:
        raise ValueError("concat_rows needs at least one tensor")
    tail = tensors[0].shape[1:]
    for t in tensors:
        if t.shape[1:] != tail:
            raise ShapeError(f"concat_rows: incompatible shapes {tensors[0].shape} and {t.shape}")
    bounds = np.cumsum([t.shape[0] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=0))

    return Tensor._from_op(np.concatenate([t.data for t in tensors], axis=0), tuple(tensors), backward, "concat_rows")


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    out = a.data.reshape(shape)
    return Tensor._from_op(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


# ---------------------------------------------------------------------------
# row-wise normalizations
# ---------------------------------------------------------------------------

def l2_normalize(z: Tensor, min_norm: float = 1e-12) -> Tensor:
    if z.ndim != 2:
        raise ShapeError(f"l2_normalize expects (N, d), got {z.shape}")
    norms = np.sqrt(np.sum(z.data * z.data, axis=1, keepdims=True))
    if np.any(norms <= min_norm):
        rows = np.flatnonzero(norms[:, 0] <= min_norm).tolist()
        raise ValueError(f"degenerate embedding: rows {rows} have norm <= {min_norm}")
    out = z.data / norms

    def backward(g):
        return ((g - out * np.sum(g * out, axis=1, keepdims=True)) / norms,)

    return Tensor._from_op(out, (z,), backward, "l2_normalize")


def log_softmax(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Row-wise log-softmax of a matrix, optionally restricted to ``mask``.

    Entries outside the mask are excluded from the normalizer, read as 0 in
    the output and receive no gradient. Every row needs one unmasked entry.
    """
    if x.ndim != 2:
        raise ShapeError(f"log_softmax expects a matrix, got {x.shape}")
    if mask is None:
        mask = np.ones(x.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise ShapeError(f"log_softmax: mask shape {mask.shape} does not match {x.shape}")
        if not np.all(mask.any(axis=1)):
            raise ValueError("log_softmax: a row has no unmasked entries")
    shifted_src = np.where(mask, x.data, -np.inf)
    row_max = shifted_src.max(axis=1, keepdims=True)
    shifted = np.where(mask, x.data - row_max, 0.0)
    lse = np.log(np.sum(np.where(mask, np.exp(shifted), 0.0), axis=1, keepdims=True))
    out = np.where(mask, shifted - lse, 0.0)
    probs = np.where(mask, np.exp(out), 0.0)

    def backward(g):
        gm = np.where(mask, g, 0.0)
        return (gm - probs * gm.sum(axis=1, keepdims=True),)

    return Tensor._from_op(out, (x,), backward, "log_softmax")


# ---------------------------------------------------------------------------
# reverse pass
# ---------------------------------------------------------------------------

class Gradients(dict):
    """Leaf tensor -> gradient array; leaves the root never reached read as zeros."""

    def __missing__(self, key: Tensor) -> np.ndarray:
        return np.zeros(key.shape)


def _topological_order(root: Tensor) -> list[Tensor]:
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


def backward(root: Tensor) -> Gradients:
    """Gradients of the scalar ``root`` with respect to every reachable leaf."""
    if root.size != 1:
        raise ShapeError(f"backward needs a scalar root, got shape {root.shape}")
    grads = Gradients()
    if not root.requires_grad:
        return grads
    adjoint: dict[int, np.ndarray] = {id(root): np.ones(root.shape)}
    for node in reversed(_topological_order(root)):
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                grads[node] = g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            adjoint[key] = adjoint[key] + pg if key in adjoint else pg
    return grads


def grad(root: Tensor, wrt: Iterable[Tensor]) -> list[np.ndarray]:
    grads = backward(root)
    return [grads[t] for t in wrt]
