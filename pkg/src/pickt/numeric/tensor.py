"""Reverse-mode autodiff over numpy arrays.

A thread-local tape records every operation whose output needs gradients;
``backward`` replays the tape in reverse, accumulating dLoss/dX into
``Tensor.grad`` buffers. Recording order is execution order, which is a
topological order by construction: an op's inputs always exist before its
output, so a single reverse sweep visits each op exactly once with the
output gradient fully accumulated.

Compute precision is a process-global switch: float32 by default, float64
for gradient checking (see ``set_default_dtype`` / ``dtype_scope``).
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np
from scipy.special import erf

from ..errors import DimensionError, ParameterError

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT2PI = 0.3989422804014327

_state = threading.local()


def _tls():
    if not hasattr(_state, "tape"):
        _state.tape = None
        _state.grad_enabled = True
    return _state


_DTYPE = {"value": np.float32}
_DEBUG = {"value": False}


def default_dtype():
    return _DTYPE["value"]


def set_default_dtype(dtype) -> None:
    """Set global compute precision: float32 (default) or float64."""
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ParameterError(f"unsupported dtype {dtype}; use float32 or float64")
    _DTYPE["value"] = dtype


@contextmanager
def dtype_scope(dtype):
    """Temporarily switch the global compute dtype."""
    old = _DTYPE["value"]
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _DTYPE["value"] = old


def set_debug_checks(on: bool) -> None:
    """When on, every op asserts a finite output (slow; for debugging)."""
    _DEBUG["value"] = bool(on)


class Tensor:
    """N-d float array plus gradient buffer.

    ``data`` is a contiguous numpy array in the global compute dtype.
    ``grad`` starts as None and is filled by ``backward``; the caller zeroes
    grads between optimizer steps (see ``zero_grads``).
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.ascontiguousarray(np.asarray(data, dtype=default_dtype()))
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @staticmethod
    def _wrap(arr: np.ndarray, requires_grad: bool) -> "Tensor":
        t = Tensor.__new__(Tensor)
        t.data = arr
        t.requires_grad = requires_grad
        t.grad = None
        if _DEBUG["value"] and not np.all(np.isfinite(arr)):
            raise FloatingPointError("non-finite value produced by an op")
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return self.data.item()

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    # arithmetic sugar; constants stay plain ndarrays (never taped)
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return add(self, -other if isinstance(other, Tensor) else -np.asarray(other))

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ParameterError("tensor/tensor division not supported; use mul + reciprocal constants")
        return mul(self, 1.0 / np.asarray(other, dtype=self.data.dtype))

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


class Tape:
    """Ordered op record for one forward pass; use as a context manager."""

    def __init__(self):
        self.ops: list[tuple[Tensor, tuple[Tensor, ...], object]] = []

    def __enter__(self):
        st = _tls()
        if st.tape is not None:
            raise RuntimeError("a tape is already active on this thread")
        st.tape = self
        return self

    def __exit__(self, *exc):
        _tls().tape = None
        return False


@contextmanager
def no_grad():
    """Disable taping (inference / finite-difference probes)."""
    st = _tls()
    old = st.grad_enabled
    st.grad_enabled = False
    try:
        yield
    finally:
        st.grad_enabled = old


def _needs_grad(*tensors) -> bool:
    st = _tls()
    if not st.grad_enabled:
        return False
    return any(isinstance(t, Tensor) and t.requires_grad for t in tensors)


def _record(out: Tensor, inputs: tuple, bwd) -> None:
    # inputs: only the Tensors that receive gradient, in bwd's return order
    st = _tls()
    if out.requires_grad and st.tape is not None:
        st.tape.ops.append((out, inputs, bwd))


def backward(loss: Tensor, params=None) -> None:
    """Accumulate dLoss/dX into .grad over the active tape.

    ``loss`` must be scalar. After the sweep, any tensor in ``params`` that
    the loss never reached gets an explicit zero gradient. Grads accumulate
    across calls; the caller zeroes them between steps.
    """
    st = _tls()
    if st.tape is None:
        raise RuntimeError("backward requires an active Tape")
    if loss.data.size != 1:
        raise DimensionError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    seed = np.ones_like(loss.data)
    loss.grad = seed if loss.grad is None else loss.grad + seed
    for out, inputs, bwd in reversed(st.tape.ops):
        gout = out.grad
        if gout is None:
            continue
        grads = bwd(gout)
        for t, g in zip(inputs, grads):
            if g is None or not t.requires_grad:
                continue
            t.grad = g if t.grad is None else t.grad + g
    if params is not None:
        for p in params:
            if p.requires_grad and p.grad is None:
                p.grad = np.zeros_like(p.data)


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


def _const(x, like: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=like.dtype)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum g down to `shape` (reverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        out = Tensor._wrap(a.data + b.data, _needs_grad(a, b))
        _record(out, (a, b), lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)))
    else:
        out = Tensor._wrap(a.data + _const(b, a.data), _needs_grad(a))
        _record(out, (a,), lambda g: (_unbroadcast(g, a.data.shape),))
    return out


def neg(a: Tensor) -> Tensor:
    out = Tensor._wrap(-a.data, _needs_grad(a))
    _record(out, (a,), lambda g: (-g,))
    return out


def mul(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        out = Tensor._wrap(a.data * b.data, _needs_grad(a, b))
        ad, bd = a.data, b.data
        _record(out, (a, b), lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))
    else:
        bc = _const(b, a.data)
        out = Tensor._wrap(a.data * bc, _needs_grad(a))
        _record(out, (a,), lambda g: (_unbroadcast(g * bc, a.data.shape),))
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; 2-d or identically batched n-d operands."""
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2:
        raise DimensionError(f"matmul needs >=2-d operands, got {ad.shape} @ {bd.shape}")
    if ad.shape[-1] != bd.shape[-2] or (ad.ndim != bd.ndim) or ad.shape[:-2] != bd.shape[:-2]:
        raise DimensionError(f"matmul shape mismatch: {ad.shape} @ {bd.shape}")
    out = Tensor._wrap(np.matmul(ad, bd), _needs_grad(a, b))

    def bwd(g):
        return (np.matmul(g, bd.swapaxes(-1, -2)), np.matmul(ad.swapaxes(-1, -2), g))

    _record(out, (a, b), bwd)
    return out


def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape
    out = Tensor._wrap(np.ascontiguousarray(a.data.reshape(shape)), _needs_grad(a))
    _record(out, (a,), lambda g: (g.reshape(old),))
    return out


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = Tensor._wrap(np.ascontiguousarray(a.data.transpose(axes)), _needs_grad(a))
    _record(out, (a,), lambda g: (g.transpose(inv),))
    return out


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out = Tensor._wrap(np.concatenate([t.data for t in tensors], axis=axis), _needs_grad(*tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    _record(out, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=axis)))
    return out


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out = Tensor._wrap(np.stack([t.data for t in tensors], axis=axis), _needs_grad(*tensors))
    n = len(tensors)
    _record(out, tuple(tensors), lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)))
    return out


def gather_rows(table: Tensor, ids: np.ndarray) -> Tensor:
    """Embedding lookup: out[..., :] = table[ids[...], :]."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise DimensionError(
            f"gather index out of range [0, {table.data.shape[0]}): min={ids.min()}, max={ids.max()}"
        )
    out = Tensor._wrap(table.data[ids], _needs_grad(table))

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    _record(out, (table,), bwd)
    return out


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor._wrap(a.data.sum(axis=axis, keepdims=keepdims), _needs_grad(a))
    shape = a.data.shape

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, shape).astype(g.dtype, copy=True),)
        ax = axis if isinstance(axis, tuple) else (axis,)
        if not keepdims:
            g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, shape).astype(g.dtype, copy=True),)

    _record(out, (a,), bwd)
    return out


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = a.data.size
    else:
        ax = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.data.shape[i] for i in ax]))
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax: rows sum to 1 for any finite input."""
    x = a.data
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor._wrap(y, _needs_grad(a))

    def bwd(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    _record(out, (a,), bwd)
    return out


def log(a: Tensor) -> Tensor:
    out = Tensor._wrap(np.log(a.data), _needs_grad(a))
    ad = a.data
    _record(out, (a,), lambda g: (g / ad,))
    return out


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes through the un-clamped region only."""
    y = np.clip(a.data, lo, hi)
    out = Tensor._wrap(y, _needs_grad(a))
    mask = ((a.data >= lo) & (a.data <= hi)).astype(a.data.dtype)
    _record(out, (a,), lambda g: (g * mask,))
    return out


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = Tensor._wrap(y, _needs_grad(a))
    _record(out, (a,), lambda g: (g * y * (1.0 - y),))
    return out


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor._wrap(y, _needs_grad(a))
    _record(out, (a,), lambda g: (g * (1.0 - y * y),))
    return out


def gelu(a: Tensor) -> Tensor:
    """Exact-erf GELU: x * Phi(x)."""
    x = a.data
    phi_cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out = Tensor._wrap((x * phi_cdf).astype(x.dtype), _needs_grad(a))

    def bwd(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
        return ((g * (phi_cdf + x * pdf)).astype(x.dtype),)

    _record(out, (a,), bwd)
    return out


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    x = a.data
    out = Tensor._wrap(np.where(x >= 0, x, slope * x).astype(x.dtype), _needs_grad(a))
    grad_mask = np.where(x >= 0, 1.0, slope).astype(x.dtype)
    _record(out, (a,), lambda g: (g * grad_mask,))
    return out


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-12) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale+shift."""
    d = x.data.shape[-1]
    if gamma.data.shape != (d,) or beta.data.shape != (d,):
        raise DimensionError(
            f"layer_norm scale/shift must be shape ({d},), got {gamma.data.shape} and {beta.data.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    out = Tensor._wrap((gamma.data * xhat + beta.data).astype(x.data.dtype), _needs_grad(x, gamma, beta))

    def bwd(g):
        reduce_axes = tuple(range(g.ndim - 1))
        dgamma = (g * xhat).sum(axis=reduce_axes)
        dbeta = g.sum(axis=reduce_axes)
        dxhat = g * gamma.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = inv_std * (dxhat - m1 - xhat * m2)
        return (dx.astype(x.data.dtype), dgamma, dbeta)

    _record(out, (x, gamma, beta), bwd)
    return out


def dropout(x: Tensor, p: float, rng, training: bool) -> Tensor:
    """Zero each element with probability p and rescale by 1/(1-p) in training."""
    if p < 0.0 or p >= 1.0:
        raise ParameterError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    keep = (rng.uniform(x.data.shape) >= p).astype(x.data.dtype)
    scale = 1.0 / (1.0 - p)
    mask = keep * scale
    out = Tensor._wrap(x.data * mask, _needs_grad(x))
    _record(out, (x,), lambda g: (g * mask,))
    return out
