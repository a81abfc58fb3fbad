"""Dense tensors with tape-based reverse-mode differentiation.

Values are numpy arrays.  While a :class:`GradTape` is active, every op whose
inputs require gradients appends a node to the tape; ``backward`` replays the
tape in reverse.  Creation order is a topological order, so no graph sort is
needed.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPES = {"f32": np.float32, "f64": np.float64}


class ShapeError(ValueError):
    """Operand extents are incompatible."""


class DomainError(ValueError):
    """Operation is undefined for the given input (e.g. empty reduction)."""


class ContractError(ValueError):
    """Caller violated an op precondition."""


class NonFiniteError(FloatingPointError):
    def __init__(self, name: str, message: str = ""):
        self.name = name
        super().__init__(message or f"non-finite values in {name!r}")


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "_parents", "_backward", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    # operator sugar
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

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)


# --------------------------------------------------------------------------
# tape
# --------------------------------------------------------------------------

_local = threading.local()


def _active_tape() -> GradTape | None:
    stack = getattr(_local, "tapes", None)
    return stack[-1] if stack else None


class GradTape:
    """Records differentiable ops executed inside its ``with`` block.

    One tape serves one forward/backward pass on one thread.
    """

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self) -> GradTape:
        if not hasattr(_local, "tapes"):
            _local.tapes = []
        _local.tapes.append(self)
        return self

    def __exit__(self, *exc):
        _local.tapes.pop()
        return False

    def __len__(self) -> int:
        return len(self.nodes)

    def backward(self, loss: Tensor) -> GradMap:
        return backward(self, loss)


class GradMap(dict):
    """Tensor -> gradient array; tensors the loss does not depend on map to zeros."""

    def __missing__(self, key: Tensor) -> np.ndarray:
        return np.zeros_like(key.data)


def backward(tape: GradTape, loss: Tensor) -> GradMap:
    """Reverse-mode sweep over ``tape`` seeded with d(loss)/d(loss) = 1."""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads = GradMap()
    grads[loss] = np.ones_like(loss.data)

    def accumulate(t: Tensor, g: np.ndarray, index=None):
        if not t.requires_grad:
            return
        cur = dict.get(grads, t)
        if index is None:
            if g.shape != t.shape:
                g = _unbroadcast(g, t.shape)
            if cur is None:
                grads[t] = np.array(g, dtype=t.dtype, copy=True)
            else:
                cur += g
        else:
            if cur is None:
                cur = np.zeros_like(t.data)
                grads[t] = cur
            np.add.at(cur, index, g) if _is_advanced(index) else _iadd(cur, index, g)

    for node in reversed(tape.nodes):
        g = dict.get(grads, node)
        if g is None or node._backward is None:
            continue
        node._backward(g, accumulate)
    return grads


def _iadd(buf, index, g):
    buf[index] += g


def _is_advanced(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# --------------------------------------------------------------------------
# node construction
# --------------------------------------------------------------------------


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype) if dtype is not None else x)


def _lift(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    return as_tensor(a), as_tensor(b)


def _node(data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    out = Tensor(data)
    tape = _active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
        tape.nodes.append(out)
    return out


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot combine shapes {a.shape} and {b.shape}") from None


# --------------------------------------------------------------------------
# elementwise arithmetic
# --------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _lift(a, b)
    _broadcast_shape(a, b, "add")

    def bw(g, acc):
        acc(a, g)
        acc(b, g)

    return _node(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = _lift(a, b)
    _broadcast_shape(a, b, "sub")

    def bw(g, acc):
        acc(a, g)
        acc(b, -g)

    return _node(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _lift(a, b)
    _broadcast_shape(a, b, "mul")

    def bw(g, acc):
        if a.requires_grad:
            acc(a, g * b.data)
        if b.requires_grad:
            acc(b, g * a.data)

    return _node(a.data * b.data, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = _lift(a, b)
    _broadcast_shape(a, b, "div")
    out = a.data / b.data

    def bw(g, acc):
        if a.requires_grad:
            acc(a, g / b.data)
        if b.requires_grad:
            acc(b, -g * out / b.data)

    return _node(out, (a, b), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product.

    ``a`` may carry leading batch axes.  ``b`` is either a 2-D weight shared
    across the batch or has the same leading axes as ``a``.
    """
    a, b = _lift(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2] or (
        b.ndim > 2 and a.shape[:-2] != b.shape[:-2]
    ):
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = np.matmul(a.data, b.data)

    def bw(g, acc):
        if a.requires_grad:
            acc(a, np.matmul(g, np.swapaxes(b.data, -1, -2)))
        if b.requires_grad:
            if b.ndim == 2:
                k, n = b.shape
                acc(b, a.data.reshape(-1, k).T @ g.reshape(-1, n))
            else:
                acc(b, np.matmul(np.swapaxes(a.data, -1, -2), g))

    return _node(out, (a, b), bw)


# --------------------------------------------------------------------------
# pointwise nonlinearities
# --------------------------------------------------------------------------


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _node(out, (x,), lambda g, acc: acc(x, g * out))


def log(x: Tensor, floor: float | None = None) -> Tensor:
    """Natural log; with ``floor`` the input is clamped from below first."""
    v = x.data if floor is None else np.maximum(x.data, floor)

    def bw(g, acc):
        gx = g / v
        if floor is not None:
            gx = np.where(x.data >= floor, gx, 0.0)
        acc(x, gx)

    return _node(np.log(v), (x,), bw)


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return _node(out, (x,), lambda g, acc: acc(x, g * 0.5 / out))


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    out = np.clip(x.data, lo, hi)
    mask = (x.data >= lo) & (x.data <= hi)
    return _node(out, (x,), lambda g, acc: acc(x, g * mask))


def _tanh_grad(y, g):
    return g * (1.0 - y * y)


def _sigmoid_grad(y, g):
    return g * y * (1.0 - y)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _node(out, (x,), lambda g, acc: acc(x, _tanh_grad(out, g)))


def sigmoid(x: Tensor) -> Tensor:
    from scipy.special import expit

    out = expit(x.data)
    return _node(out, (x,), lambda g, acc: acc(x, _sigmoid_grad(out, g)))


_SQRT_HALF = 0.7071067811865476
_INV_SQRT_2PI = 0.3989422804014327


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian-error linear unit x * Phi(x)."""
    from scipy.special import erf

    z = x.data
    cdf = 0.5 * (1.0 + erf(z * _SQRT_HALF))
    out = z * cdf

    def bw(g, acc):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * z * z)
        acc(x, g * (cdf + z * pdf))

    return _node(out.astype(z.dtype, copy=False), (x,), bw)


def _softmax_grad(y, g, axis):
    return y * (g - np.sum(g * y, axis=axis, keepdims=True))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if x.shape[axis] < 1:
        raise DomainError("softmax over an empty axis")
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)
    return _node(out, (x,), lambda g, acc: acc(x, _softmax_grad(out, g, axis)))


# --------------------------------------------------------------------------
# reductions
# --------------------------------------------------------------------------


def _norm_axes(x: Tensor, axis) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(x.ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    out = []
    for a in axes:
        if not -x.ndim <= a < x.ndim:
            raise DomainError(f"axis {a} out of range for shape {x.shape}")
        out.append(a % x.ndim)
    return tuple(sorted(set(out)))


def _expand(g: np.ndarray, x_shape, axes, keepdims) -> np.ndarray:
    if not keepdims:
        for a in axes:
            g = np.expand_dims(g, a)
    return np.broadcast_to(g, x_shape)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _norm_axes(x, axis)
    out = np.sum(x.data, axis=axes, keepdims=keepdims)
    return _node(np.asarray(out), (x,), lambda g, acc: acc(x, _expand(g, x.shape, axes, keepdims)))


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(x, axis)
    n = int(np.prod([x.shape[a] for a in axes]))
    if n == 0:
        raise DomainError(f"mean over empty axes {axes} of shape {x.shape}")
    out = np.mean(x.data, axis=axes, keepdims=keepdims)
    return _node(
        np.asarray(out), (x,), lambda g, acc: acc(x, _expand(g, x.shape, axes, keepdims) / n)
    )


def variance(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    """Population variance (divides by n)."""
    axes = _norm_axes(x, axis)
    n = int(np.prod([x.shape[a] for a in axes]))
    if n == 0:
        raise DomainError(f"variance over empty axes {axes} of shape {x.shape}")
    mu = np.mean(x.data, axis=axes, keepdims=True)
    dev = x.data - mu
    out = np.mean(dev * dev, axis=axes, keepdims=keepdims)

    def bw(g, acc):
        acc(x, _expand(g, x.shape, axes, keepdims) * (2.0 / n) * dev)

    return _node(np.asarray(out), (x,), bw)


def reduce(x: Tensor, axes=None, kind: str = "mean", keepdims: bool = False) -> Tensor:
    fn = {"mean": mean, "variance": variance, "sum": sum}.get(kind)
    if fn is None:
        raise ContractError(f"unknown reduction {kind!r}")
    return fn(x, axes, keepdims)


# --------------------------------------------------------------------------
# shape manipulation
# --------------------------------------------------------------------------


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)
    return _node(out, (x,), lambda g, acc: acc(x, g.reshape(x.shape)))


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = np.transpose(x.data, axes)
    return _node(out, (x,), lambda g, acc: acc(x, np.transpose(g, inv)))


def take(x: Tensor, index) -> Tensor:
    """Basic or advanced indexing; the backward pass scatters into the slice."""
    out = x.data[index]
    if not isinstance(out, np.ndarray):
        out = np.asarray(out)
    return _node(out, (x,), lambda g, acc: acc(x, g, index))


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = [as_tensor(t) for t in xs]
    axis = axis % xs[0].ndim
    for t in xs[1:]:
        if t.ndim != xs[0].ndim or any(
            t.shape[d] != xs[0].shape[d] for d in range(t.ndim) if d != axis
        ):
            raise ShapeError(f"concat: shapes {[u.shape for u in xs]} differ off axis {axis}")
    out = np.concatenate([t.data for t in xs], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in xs])

    def bw(g, acc):
        for t, lo, hi in zip(xs, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                acc(t, g[tuple(sl)])

    return _node(out, xs, bw)


def stack(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = [as_tensor(t) for t in xs]
    out = np.stack([t.data for t in xs], axis=axis)

    def bw(g, acc):
        for i, t in enumerate(xs):
            if t.requires_grad:
                acc(t, np.take(g, i, axis=axis))

    return _node(out, xs, bw)


# --------------------------------------------------------------------------
# validation helpers
# --------------------------------------------------------------------------


def check_finite(named: dict[str, np.ndarray] | Iterable[tuple[str, np.ndarray]]) -> None:
    """Raise :class:`NonFiniteError` naming the first tensor holding NaN/Inf."""
    items = named.items() if isinstance(named, dict) else named
    for name, arr in items:
        data = arr.data if isinstance(arr, Tensor) else arr
        if not np.all(np.isfinite(data)):
            raise NonFiniteError(name)


def parameters(arrays: dict[str, np.ndarray]) -> dict[str, Tensor]:
    """Wrap named arrays as gradient-tracking leaves."""
    return {k: Tensor(v, requires_grad=True, name=k) for k, v in arrays.items()}
