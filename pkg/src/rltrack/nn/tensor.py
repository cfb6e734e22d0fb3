"""Reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps an ndarray plus an optional gradient slot and a backward
closure.  Graphs are built eagerly by the ops below and consumed by
``Tensor.backward`` in a single reverse topological sweep.  Wrap inference
code in ``no_grad()`` to skip graph construction entirely.

Python scalars are applied directly (weak promotion) so float32 graphs stay
float32; mixing float32 and float64 tensors is the caller's responsibility.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from ..errors import NumericError

_grad_enabled = True
_debug_finite = False


@contextmanager
def no_grad():
    """Disable graph construction inside the block (pure-numpy forward)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def set_debug_finite(flag: bool) -> None:
    """When on, every op output is checked for NaN/inf (slow; debug runs)."""
    global _debug_finite
    _debug_finite = bool(flag)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce ``grad`` back to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None and arr.dtype != dtype:
            arr = arr.astype(dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents = ()

    # ------------------------------------------------------------------ infra

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _needs(self) -> bool:
        return self.requires_grad or bool(self._parents)

    def _accumulate(self, grad: np.ndarray) -> None:
        if grad.dtype != self.data.dtype:
            grad = grad.astype(self.data.dtype)
        self.grad = grad if self.grad is None else self.grad + grad

    def backward(self, grad=None) -> None:
        """Populate .grad on every reachable tensor that requires it."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without an explicit gradient needs a scalar")
            grad = np.ones_like(self.data)
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited and (p._parents or p.requires_grad):
                    stack.append((p, False))
        self.grad = np.asarray(grad, dtype=self.data.dtype)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # ------------------------------------------------------------- arithmetic

    def __add__(self, other):
        if isinstance(other, (int, float)):
            out = _make(self.data + other, (self,))
            if out._parents:
                out._backward = lambda g: self._accumulate(g)
            return out
        other = _as_tensor(other)
        out = _make(self.data + other.data, (self, other))
        if out._parents:
            def backward(g):
                if self._needs():
                    self._accumulate(_unbroadcast(g, self.data.shape))
                if other._needs():
                    other._accumulate(_unbroadcast(g, other.data.shape))
            out._backward = backward
        return out

    __radd__ = __add__

    def __neg__(self):
        out = _make(-self.data, (self,))
        if out._parents:
            out._backward = lambda g: self._accumulate(-g)
        return out

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return self + (-other)
        return self + (-_as_tensor(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            out = _make(self.data * other, (self,))
            if out._parents:
                out._backward = lambda g: self._accumulate(g * other)
            return out
        other = _as_tensor(other)
        out = _make(self.data * other.data, (self, other))
        if out._parents:
            def backward(g):
                if self._needs():
                    self._accumulate(_unbroadcast(g * other.data, self.data.shape))
                if other._needs():
                    other._accumulate(_unbroadcast(g * self.data, other.data.shape))
            out._backward = backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return self * (1.0 / other)
        other = _as_tensor(other)
        out = _make(self.data / other.data, (self, other))
        if out._parents:
            def backward(g):
                if self._needs():
                    self._accumulate(_unbroadcast(g / other.data, self.data.shape))
                if other._needs():
                    other._accumulate(_unbroadcast(-g * self.data / (other.data * other.data), other.data.shape))
            out._backward = backward
        return out

    def __rtruediv__(self, other):
        return _as_tensor(other) / self

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")
        out = _make(self.data ** exponent, (self,))
        if out._parents:
            out._backward = lambda g: self._accumulate(g * (exponent * self.data ** (exponent - 1)))
        return out

    def __matmul__(self, other):
        other = _as_tensor(other)
        if self.data.ndim < 2 or other.data.ndim < 2:
            raise ValueError("matmul requires tensors with ndim >= 2")
        out = _make(self.data @ other.data, (self, other))
        if out._parents:
            def backward(g):
                if self._needs():
                    gx = g @ np.swapaxes(other.data, -1, -2)
                    self._accumulate(_unbroadcast(gx, self.data.shape))
                if other._needs():
                    gy = np.swapaxes(self.data, -1, -2) @ g
                    other._accumulate(_unbroadcast(gy, other.data.shape))
            out._backward = backward
        return out

    # ------------------------------------------------------------- reductions

    def sum(self, axis=None, keepdims: bool = False):
        out = _make(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out._parents:
            def backward(g):
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                self._accumulate(np.broadcast_to(g, self.data.shape))
            out._backward = backward
        return out

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            count = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = 1
            for a in axes:
                count *= self.data.shape[a]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(count))

    # ------------------------------------------------------------ elementwise

    def exp(self):
        val = np.exp(self.data)
        out = _make(val, (self,))
        if out._parents:
            out._backward = lambda g: self._accumulate(g * val)
        return out

    def log(self):
        out = _make(np.log(self.data), (self,))
        if out._parents:
            out._backward = lambda g: self._accumulate(g / self.data)
        return out

    def sqrt(self):
        val = np.sqrt(self.data)
        out = _make(val, (self,))
        if out._parents:
            out._backward = lambda g: self._accumulate(g * (0.5 / val))
        return out

    def tanh(self):
        val = np.tanh(self.data)
        out = _make(val, (self,))
        if out._parents:
            out._backward = lambda g: self._accumulate(g * (1.0 - val * val))
        return out

    def relu(self):
        mask = self.data > 0
        out = _make(np.where(mask, self.data, 0.0), (self,))
        if out._parents:
            out._backward = lambda g: self._accumulate(g * mask)
        return out

    def sigmoid(self):
        val = 1.0 / (1.0 + np.exp(-self.data))
        out = _make(val, (self,))
        if out._parents:
            out._backward = lambda g: self._accumulate(g * (val * (1.0 - val)))
        return out

    def clip(self, lo: float, hi: float):
        """Clamp values; gradient passes through inside [lo, hi] only."""
        mask = (self.data >= lo) & (self.data <= hi)
        out = _make(np.clip(self.data, lo, hi), (self,))
        if out._parents:
            out._backward = lambda g: self._accumulate(g * mask)
        return out

    # ----------------------------------------------------------------- shapes

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        out = _make(self.data.reshape(shape), (self,))
        if out._parents:
            out._backward = lambda g: self._accumulate(g.reshape(old))
        return out

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = tuple(np.argsort(axes))
        out = _make(self.data.transpose(axes), (self,))
        if out._parents:
            out._backward = lambda g: self._accumulate(g.transpose(inv))
        return out

    def __getitem__(self, key):
        out = _make(self.data[key], (self,))
        if out._parents:
            def backward(g):
                full = np.zeros_like(self.data)
                np.add.at(full, key, g)
                self._accumulate(full)
            out._backward = backward
        return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple) -> Tensor:
    if _debug_finite and not np.all(np.isfinite(data)):
        raise NumericError("non-finite value produced by a tensor op")
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad or p._parents for p in parents):
        out._parents = parents
    return out


# ----------------------------------------------------------------- functions


def parameter(data, dtype=np.float32) -> Tensor:
    """A leaf tensor that accumulates gradients."""
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out = _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    if out._parents:
        sizes = [t.data.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)

        def backward(g):
            for t, a, b in zip(tensors, offsets[:-1], offsets[1:]):
                if t._needs():
                    idx = [slice(None)] * g.ndim
                    idx[axis] = slice(a, b)
                    t._accumulate(g[tuple(idx)])
        out._backward = backward
    return out


def broadcast_to(t, shape) -> Tensor:
    t = _as_tensor(t)
    out = _make(np.broadcast_to(t.data, shape).copy(), (t,))
    if out._parents:
        out._backward = lambda g: t._accumulate(_unbroadcast(g, t.data.shape))
    return out


def softmax(t: Tensor, axis: int = -1) -> Tensor:
    shift = t - Tensor(t.data.max(axis=axis, keepdims=True))
    e = shift.exp()
    return e / e.sum(axis=axis, keepdims=True)


def pad3d(t: Tensor, pad: int) -> Tensor:
    """Zero-pad the last three axes of a (..., D, H, W) tensor."""
    if pad == 0:
        return t
    width = [(0, 0)] * (t.data.ndim - 3) + [(pad, pad)] * 3
    out = _make(np.pad(t.data, width), (t,))
    if out._parents:
        sl = (Ellipsis,) + (slice(pad, -pad),) * 3
        out._backward = lambda g: t._accumulate(g[sl])
    return out


def dilate3d(t: Tensor, stride: int) -> Tensor:
    """Insert ``stride - 1`` zeros between entries of the last three axes."""
    if stride == 1:
        return t
    d, h, w = t.data.shape[-3:]
    shape = t.data.shape[:-3] + ((d - 1) * stride + 1, (h - 1) * stride + 1, (w - 1) * stride + 1)
    data = np.zeros(shape, dtype=t.data.dtype)
    sl = (Ellipsis, slice(None, None, stride), slice(None, None, stride), slice(None, None, stride))
    data[sl] = t.data
    out = _make(data, (t,))
    if out._parents:
        out._backward = lambda g: t._accumulate(g[sl])
    return out


def gather_last(t: Tensor, index: np.ndarray) -> Tensor:
    """Fancy-gather along the last axis: out[..., j] = t[..., index[j]].

    ``index`` may be multi-dimensional; output shape is t.shape[:-1] + index.shape.
    """
    out = _make(t.data[..., index], (t,))
    if out._parents:
        def backward(g):
            full = np.zeros_like(t.data)
            flat_idx = index.ravel()
            g2 = g.reshape(t.data.shape[:-1] + (flat_idx.size,))
            np.add.at(full, (Ellipsis, flat_idx), g2)
            t._accumulate(full)
        out._backward = backward
    return out
