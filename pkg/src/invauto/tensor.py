"""Dense tensors with reverse-mode differentiation.

Parameters that appear at several places in a graph (the tied-weight
mechanism) accumulate gradient contributions from every use site into a
single grad buffer.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from typing import Callable, Iterable, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, DimensionError

_default_dtype = np.float32


def set_default_dtype(dtype) -> None:
    global _default_dtype
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ContractError(f"unsupported dtype {dtype}")
    _default_dtype = dtype.type


def default_dtype():
    return _default_dtype


@contextmanager
def using_dtype(dtype):
    """Temporarily switch the dtype new tensors are created with."""
    old = _default_dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(old)


def _as_array(data) -> np.ndarray:
    arr = np.asarray(data)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(_default_dtype)
    return arr


class Tensor:
    """A numpy array plus an optional gradient buffer and graph linkage."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 parents: tuple = (), backward: Optional[Callable] = None):
        self.data = _as_array(data)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- autograd ------------------------------------------------------------

    def backward(self) -> None:
        """Populate .grad of every reachable tensor that requires it."""
        if self.size != 1:
            raise ContractError("backward() requires a scalar loss")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad = self.grad + np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad and self._backward is None:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- operators -----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, -_wrap(other))

    def __rsub__(self, other):
        return add(_wrap(other), -self)

    def __neg__(self):
        out = _make(-self.data, (self,))
        if out._parents:
            def back(g, a=self):
                a._accumulate(-g)
            out._backward = back
        return out

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _wrap(other)
        return mul(self, other ** -1.0)

    def __rtruediv__(self, other):
        return mul(_wrap(other), self ** -1.0)

    def __pow__(self, exponent: float):
        if not np.isscalar(exponent):
            raise ContractError("only scalar exponents are supported")
        out = _make(self.data ** exponent, (self,))

        def back(g, a=self, e=exponent):
            a._accumulate(g * e * a.data ** (e - 1))

        out._backward = back
        return out

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        out = _make(self.data.T, (self,))

        def back(g, a=self):
            a._accumulate(g.T)

        out._backward = back
        return out

    # -- reductions and elementwise functions ---------------------------------

    def sum(self, axis=None, keepdims=False):
        out = _make(self.data.sum(axis=axis, keepdims=keepdims), (self,))

        def back(g, a=self, ax=axis, kd=keepdims):
            if ax is not None and not kd:
                g = np.expand_dims(g, ax)
            a._accumulate(np.broadcast_to(g, a.shape).astype(a.data.dtype))

        out._backward = back
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.size if axis is None else np.prod(
            [self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    def abs(self):
        out = _make(np.abs(self.data), (self,))

        def back(g, a=self):
            a._accumulate(g * np.sign(a.data))

        out._backward = back
        return out

    def tanh(self):
        t = np.tanh(self.data)
        out = _make(t, (self,))

        def back(g, a=self, t=t):
            a._accumulate(g * (1.0 - t * t))

        out._backward = back
        return out

    def exp(self):
        e = np.exp(self.data)
        out = _make(e, (self,))

        def back(g, a=self, e=e):
            a._accumulate(g * e)

        out._backward = back
        return out

    def log(self):
        out = _make(np.log(self.data), (self,))

        def back(g, a=self):
            a._accumulate(g / a.data)

        out._backward = back
        return out

    def sqrt(self):
        return self ** 0.5

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        out = _make(self.data.reshape(shape), (self,))

        def back(g, a=self, old=old):
            a._accumulate(g.reshape(old))

        out._backward = back
        return out


class Parameter(Tensor):
    """A trainable tensor with a stable identity.

    One Parameter object may be referenced by several layers; gradient
    contributions from every site sum into the single grad buffer.
    """

    __slots__ = ("uid",)
    _ids = itertools.count()

    def __init__(self, data):
        super().__init__(data, requires_grad=True)
        self.uid = next(Parameter._ids)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple) -> Tensor:
    tracked = tuple(p for p in parents
                    if p.requires_grad or p._backward is not None)
    return Tensor(data, requires_grad=bool(tracked), parents=tracked)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = _make(a.data + b.data, (a, b))

    def back(g, a=a, b=b):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(g, b.shape))

    out._backward = back
    return out


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = _make(a.data * b.data, (a, b))

    def back(g, a=a, b=b):
        a._accumulate(_unbroadcast(g * b.data, a.shape))
        b._accumulate(_unbroadcast(g * a.data, b.shape))

    out._backward = back
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-d tensors."""
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions disagree: {a.shape} @ {b.shape}")
    out = _make(a.data @ b.data, (a, b))

    def back(g, a=a, b=b):
        a._accumulate(g @ b.data.T)
        b._accumulate(a.data.T @ g)

    out._backward = back
    return out


def concat_rows(tensors: Iterable[Tensor]) -> Tensor:
    """Concatenate tensors along the leading axis."""
    ts = [_wrap(t) for t in tensors]
    out = _make(np.concatenate([t.data for t in ts], axis=0), tuple(ts))

    def back(g, ts=ts):
        start = 0
        for t in ts:
            n = t.data.shape[0]
            t._accumulate(g[start:start + n])
            start += n

    out._backward = back
    return out


def leaky_relu(x: Tensor, slope: float) -> Tensor:
    x = _wrap(x)
    out = _make(np.where(x.data >= 0, x.data, slope * x.data), (x,))

    def back(g, x=x, s=slope):
        x._accumulate(g * np.where(x.data >= 0, 1.0, s).astype(x.data.dtype))

    out._backward = back
    return out


def inv_leaky_relu(x: Tensor, alpha: float) -> Tensor:
    """Bijective activation: y = x/alpha for x >= 0, else alpha*x."""
    x = _wrap(x)
    out = _make(np.where(x.data >= 0, x.data / alpha, x.data * alpha), (x,))

    def back(g, x=x, a=alpha):
        x._accumulate(g * np.where(x.data >= 0, 1.0 / a, a).astype(x.data.dtype))

    out._backward = back
    return out


def inv_leaky_relu_inverse(y: Tensor, alpha: float) -> Tensor:
    """Inverse of inv_leaky_relu; branches on sign(y), which equals sign(x)."""
    y = _wrap(y)
    out = _make(np.where(y.data >= 0, y.data * alpha, y.data / alpha), (y,))

    def back(g, y=y, a=alpha):
        y._accumulate(g * np.where(y.data >= 0, a, 1.0 / a).astype(y.data.dtype))

    out._backward = back
    return out


def sigmoid(x: Tensor) -> Tensor:
    x = _wrap(x)
    s = 1.0 / (1.0 + np.exp(-x.data))
    out = _make(s, (x,))

    def back(g, x=x, s=s):
        x._accumulate(g * s * (1.0 - s))

    out._backward = back
    return out


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient is zero outside the range."""
    x = _wrap(x)
    out = _make(np.clip(x.data, lo, hi), (x,))

    def back(g, x=x, lo=lo, hi=hi):
        inside = (x.data >= lo) & (x.data <= hi)
        x._accumulate(g * inside.astype(x.data.dtype))

    out._backward = back
    return out


# -- convolution -------------------------------------------------------------

def _conv_out(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def _check_conv_args(h, w, k, stride, pad):
    if stride not in (1, 2):
        raise DimensionError(f"stride must be 1 or 2, got {stride}")
    if k > h + 2 * pad or k > w + 2 * pad:
        raise DimensionError(f"kernel {k} larger than padded input {h}x{w}+{pad}")


def _im2col(x: np.ndarray, k: int, stride: int, pad: int):
    n, c, h, w = x.shape
    ho, wo = _conv_out(h, k, stride, pad), _conv_out(w, k, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * k * k, ho * wo)
    return np.ascontiguousarray(cols), ho, wo


def _col2im(cols: np.ndarray, x_shape, k: int, stride: int, pad: int) -> np.ndarray:
    n, c, h, w = x_shape
    ho, wo = _conv_out(h, k, stride, pad), _conv_out(w, k, stride, pad)
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    cols6 = cols.reshape(n, c, k, k, ho, wo)
    for i in range(k):
        for j in range(k):
            xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols6[:, :, i, j]
    return xp[:, :, pad:pad + h, pad:pad + w]


def _batched(x: Tensor):
    if x.ndim == 3:
        return x.reshape((1,) + x.shape), True
    if x.ndim == 4:
        return x, False
    raise DimensionError(f"conv expects rank 3 or 4 input, got shape {x.shape}")


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of (N,C,H,W) or (C,H,W) input with a (Co,Ci,K,K) kernel."""
    x = _wrap(x)
    kernel = _wrap(kernel)
    xb, squeeze = _batched(x)
    n, c, h, w = xb.shape
    co, ci, k, k2 = kernel.shape
    if k != k2 or ci != c:
        raise DimensionError(f"kernel {kernel.shape} does not match input {xb.shape}")
    _check_conv_args(h, w, k, stride, pad)
    cols, ho, wo = _im2col(xb.data, k, stride, pad)
    wmat = kernel.data.reshape(co, ci * k * k)
    y = np.matmul(wmat, cols).reshape(n, co, ho, wo)
    out = _make(y, (xb, kernel))

    def back(g, xb=xb, kernel=kernel, cols=cols, wmat=wmat,
             shape=(n, c, h, w), k=k, stride=stride, pad=pad,
             co=co, ho=ho, wo=wo):
        gf = g.reshape(g.shape[0], co, ho * wo)
        kernel._accumulate(
            np.matmul(gf, cols.transpose(0, 2, 1)).sum(axis=0).reshape(kernel.shape))
        dx_cols = np.matmul(wmat.T, gf)
        xb._accumulate(_col2im(dx_cols, shape, k, stride, pad))

    out._backward = back
    return out.reshape(out.shape[1:]) if squeeze else out


def conv2d_transposed(y: Tensor, kernel: Tensor, stride: int = 1, pad: int = 0,
                      out_hw: Optional[tuple] = None) -> Tensor:
    """Adjoint of conv2d: applies the transpose of the Toeplitz matrix of the
    forward convolution described by (kernel, stride, pad).

    out_hw disambiguates the forward input extents when stride > 1.
    """
    y = _wrap(y)
    kernel = _wrap(kernel)
    yb, squeeze = _batched(y)
    n, cy, hy, wy = yb.shape
    co, ci, k, k2 = kernel.shape
    if k != k2 or cy != co:
        raise DimensionError(f"kernel {kernel.shape} does not match input {yb.shape}")
    if out_hw is None:
        out_hw = ((hy - 1) * stride - 2 * pad + k, (wy - 1) * stride - 2 * pad + k)
    h, w = out_hw
    _check_conv_args(h, w, k, stride, pad)
    if _conv_out(h, k, stride, pad) != hy or _conv_out(w, k, stride, pad) != wy:
        raise DimensionError(
            f"input {yb.shape} is not the output of a ({k},{stride},{pad}) conv on {out_hw}")
    wmat = kernel.data.reshape(co, ci * k * k)
    yf = yb.data.reshape(n, co, hy * wy)
    x = _col2im(np.matmul(wmat.T, yf), (n, ci, h, w), k, stride, pad)
    out = _make(x, (yb, kernel))

    def back(g, yb=yb, kernel=kernel, yf=yf, wmat=wmat,
             k=k, stride=stride, pad=pad, co=co, hy=hy, wy=wy):
        gcols, _, _ = _im2col(g, k, stride, pad)
        yb._accumulate(np.matmul(wmat, gcols).reshape(yb.shape))
        kernel._accumulate(
            np.matmul(yf, gcols.transpose(0, 2, 1)).sum(axis=0).reshape(kernel.shape))

    out._backward = back
    return out.reshape(out.shape[1:]) if squeeze else out


# -- gradient checking -------------------------------------------------------

def grad_check(loss_fn: Callable[[], Tensor], params: Iterable[Parameter],
               eps: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients.

    loss_fn must be a deterministic closure over params returning a scalar
    Tensor. Run in 64-bit mode; finite differences need the headroom.
    """
    params = list(params)
    if not params:
        return 0.0
    for p in params:
        p.zero_grad()
    loss_fn().backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
                for p in params]
    worst = 0.0
    for p, an in zip(params, analytic):
        flat = p.data.reshape(-1)
        an_flat = an.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = loss_fn().item()
            flat[i] = orig - eps
            lo = loss_fn().item()
            flat[i] = orig
            cd = (hi - lo) / (2.0 * eps)
            denom = max(abs(an_flat[i]), abs(cd), 1e-8)
            worst = max(worst, abs(an_flat[i] - cd) / denom)
    return worst
