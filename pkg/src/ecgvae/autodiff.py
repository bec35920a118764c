"""Reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps an ndarray plus a backward closure and its parents; calling
backward() on a scalar loss walks the recorded graph in reverse topological
order and accumulates gradients into every tensor that requires them.
Gradient accumulation is additive on purpose: a tensor consumed by two ops
receives the sum of both contributions.

The op set is exactly what the encoder/decoder stack needs, nothing more.
Every op checks its output for NaN/Inf and raises NumericsError immediately,
which keeps a diverging training run from silently poisoning later epochs.
Arrays are float32 or float64; reductions accumulate in float64 and cast back.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .errors import DimensionError, NumericsError, StateError

_ALLOWED_DTYPES = (np.float32, np.float64)


def _check_finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise NumericsError(f"non-finite values produced by op '{op}'")
    return arr


class Tensor:
    """Node in the computation graph: value, optional grad, backward hook."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        *,
        _parents: tuple["Tensor", ...] = (),
        _backward: Optional[Callable[[np.ndarray], None]] = None,
        op: str = "leaf",
    ):
        arr = np.asarray(data)
        if arr.dtype not in _ALLOWED_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents = _parents
        self._backward = _backward

    # -- introspection ------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:
        return f"Tensor(op={self.op!r}, shape={self.data.shape}, dtype={self.data.dtype})"

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError("item() needs a single-element tensor")
        return float(self.data.reshape(()))

    # -- graph --------------------------------------------------------------

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g
        else:
            self.grad = self.grad + g

    def backward(self) -> None:
        """Backpropagate from this scalar through the recorded graph."""
        if self.data.size != 1:
            raise StateError("backward() requires a scalar loss tensor")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
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
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_coerce(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def exp(self):
        return exp(self)

    def square(self):
        return square(self)

    def relu(self):
        return relu(self)

    def sum(self, axis=None, keepdims: bool = False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape):
        return reshape(self, shape)


def _coerce(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def _match_dtypes(a: Tensor, b: Tensor, op: str) -> None:
    if a.dtype != b.dtype:
        raise ValueError(f"{op}: dtype mismatch {a.dtype} vs {b.dtype}")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _node(data: np.ndarray, parents: Sequence[Tensor], bwd, op: str) -> Tensor:
    _check_finite(data, op)
    req = any(p.requires_grad for p in parents)
    return Tensor(
        data,
        requires_grad=req,
        _parents=tuple(parents),
        _backward=bwd if req else None,
        op=op,
    )


# ---------------------------------------------------------------------------
# elementwise ops


def add(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a, b = b, a
    b = _coerce(b, a.dtype)
    _match_dtypes(a, b, "add")
    out_data = a.data + b.data
    out = _node(out_data, (a, b), None, "add")

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    out._backward = bwd if out.requires_grad else None
    return out


def sub(a: Tensor, b) -> Tensor:
    b = _coerce(b, a.dtype)
    _match_dtypes(a, b, "sub")
    out = _node(a.data - b.data, (a, b), None, "sub")

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.data.shape))

    out._backward = bwd if out.requires_grad else None
    return out


def mul(a: Tensor, b) -> Tensor:
    b = _coerce(b, a.dtype)
    _match_dtypes(a, b, "mul")
    out = _node(a.data * b.data, (a, b), None, "mul")

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    out._backward = bwd if out.requires_grad else None
    return out


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):  # overflow becomes a NumericsError below
        out_data = np.exp(x.data)
    out = _node(out_data, (x,), None, "exp")

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(g * out_data)

    out._backward = bwd if out.requires_grad else None
    return out


def square(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):  # overflow becomes a NumericsError below
        out_data = x.data * x.data
    out = _node(out_data, (x,), None, "square")

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(g * (2.0 * x.data))

    out._backward = bwd if out.requires_grad else None
    return out


def powf(x: Tensor, p: float) -> Tensor:
    """x ** p for strictly positive x (used for 1/sqrt in normalization)."""
    out_data = np.power(x.data, p)
    out = _node(out_data, (x,), None, "powf")

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(g * (p * np.power(x.data, p - 1.0)))

    out._backward = bwd if out.requires_grad else None
    return out


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = _node(np.where(mask, x.data, x.dtype.type(0)), (x,), None, "relu")

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(np.where(mask, g, g.dtype.type(0)))

    out._backward = bwd if out.requires_grad else None
    return out


# ---------------------------------------------------------------------------
# reductions and shape ops


def _norm_axes(axis, ndim: int):
    if axis is None:
        return None
    if not isinstance(axis, tuple):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def reduce_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_data = x.data.sum(axis=axis, keepdims=keepdims, dtype=np.float64).astype(x.dtype)
    out = _node(out_data, (x,), None, "sum")
    axes = _norm_axes(axis, x.data.ndim)

    def bwd(g: np.ndarray) -> None:
        if not x.requires_grad:
            return
        gg = g
        if axes is not None and not keepdims:
            gg = np.expand_dims(gg, axes)
        x._accumulate(np.broadcast_to(gg, x.data.shape))

    out._backward = bwd if out.requires_grad else None
    return out


def reduce_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_data = x.data.mean(axis=axis, keepdims=keepdims, dtype=np.float64).astype(x.dtype)
    out = _node(out_data, (x,), None, "mean")
    axes = _norm_axes(axis, x.data.ndim)
    count = x.data.size if axes is None else int(np.prod([x.data.shape[a] for a in axes]))
    inv = 1.0 / count

    def bwd(g: np.ndarray) -> None:
        if not x.requires_grad:
            return
        gg = g * g.dtype.type(inv)
        if axes is not None and not keepdims:
            gg = np.expand_dims(gg, axes)
        x._accumulate(np.broadcast_to(gg, x.data.shape))

    out._backward = bwd if out.requires_grad else None
    return out


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out_data = x.data.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"reshape: cannot view {x.data.shape} as {shape}") from e
    out = _node(out_data, (x,), None, "reshape")

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(g.reshape(x.data.shape))

    out._backward = bwd if out.requires_grad else None
    return out


def concat(parts: Sequence[Tensor], axis: int = 1) -> Tensor:
    if not parts:
        raise DimensionError("concat needs at least one tensor")
    ref = parts[0]
    for p in parts[1:]:
        _match_dtypes(ref, p, "concat")
        if len(p.data.shape) != len(ref.data.shape):
            raise DimensionError("concat: rank mismatch")
    try:
        out_data = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as e:
        raise DimensionError(f"concat: incompatible shapes {[p.data.shape for p in parts]}") from e
    out = _node(out_data, tuple(parts), None, "concat")
    sizes = [p.data.shape[axis] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def bwd(g: np.ndarray) -> None:
        sl = [slice(None)] * g.ndim
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            if p.requires_grad:
                sl[axis] = slice(int(lo), int(hi))
                p._accumulate(g[tuple(sl)])

    out._backward = bwd if out.requires_grad else None
    return out


# ---------------------------------------------------------------------------
# linear / convolutional ops


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map y = x @ w.T + b with x [B,n], w [m,n], b [m]."""
    if x.data.ndim != 2:
        raise DimensionError(f"dense expects rank-2 input, got shape {x.data.shape}")
    if w.data.ndim != 2 or x.data.shape[1] != w.data.shape[1]:
        raise DimensionError(
            f"dense: input width {x.data.shape} does not match weight {w.data.shape}"
        )
    out = _node(x.data @ w.data.T + b.data, (x, w, b), None, "dense")

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(g @ w.data)
        if w.requires_grad:
            w._accumulate(g.T @ x.data)
        if b.requires_grad:
            b._accumulate(g.sum(axis=0))

    out._backward = bwd if out.requires_grad else None
    return out


def conv1d(x: Tensor, w: Tensor, b: Optional[Tensor] = None, stride: int = 1) -> Tensor:
    """Zero-padded 1-d cross-correlation over [B,C,L] with optional bias."""
    if x.data.ndim != 3:
        raise DimensionError(f"conv1d expects rank-3 input, got shape {x.data.shape}")
    if w.data.ndim != 3:
        raise DimensionError(f"conv1d weight must be rank-3, got {w.data.shape}")
    if w.data.shape[2] % 2 != 1:
        raise ValueError(f"conv1d kernel width must be odd, got {w.data.shape[2]}")
    if stride < 1:
        raise ValueError(f"conv1d stride must be >= 1, got {stride}")
    if x.data.shape[1] != w.data.shape[1]:
        raise DimensionError(
            f"conv1d: input has {x.data.shape[1]} channels, weight expects {w.data.shape[1]}"
        )
    y = kernels.conv1d_fwd(x.data, w.data, stride)
    if b is not None:
        y = y + b.data.reshape(1, -1, 1)
    parents = (x, w) if b is None else (x, w, b)
    out = _node(y, parents, None, "conv1d")

    def bwd(g: np.ndarray) -> None:
        dx, dw = kernels.conv1d_bwd(x.data, w.data, stride, g)
        if x.requires_grad:
            x._accumulate(dx)
        if w.requires_grad:
            w._accumulate(dw)
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2)))

    out._backward = bwd if out.requires_grad else None
    return out


def maxpool1d(x: Tensor, width: int = 2) -> Tensor:
    """Non-overlapping max pool along the last axis of [B,C,L]."""
    if x.data.ndim != 3:
        raise DimensionError(f"maxpool1d expects rank-3 input, got shape {x.data.shape}")
    if width < 1:
        raise ValueError(f"pool width must be >= 1, got {width}")
    if width > x.data.shape[2]:
        raise DimensionError(
            f"pool width {width} exceeds input length {x.data.shape[2]}"
        )
    y, idx = kernels.maxpool1d_fwd(x.data, width)
    length = x.data.shape[2]
    out = _node(y, (x,), None, "maxpool1d")

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(kernels.maxpool1d_bwd(g, idx, length))

    out._backward = bwd if out.requires_grad else None
    return out


def upsample1d(x: Tensor, factor: int = 2) -> Tensor:
    """Nearest-neighbor repeat along the last axis of [B,C,L]."""
    if x.data.ndim != 3:
        raise DimensionError(f"upsample1d expects rank-3 input, got shape {x.data.shape}")
    if factor < 1:
        raise ValueError(f"upsample factor must be >= 1, got {factor}")
    out = _node(np.repeat(x.data, factor, axis=2), (x,), None, "upsample1d")
    b, c, length = x.data.shape

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(g.reshape(b, c, length, factor).sum(axis=3))

    out._backward = bwd if out.requires_grad else None
    return out
