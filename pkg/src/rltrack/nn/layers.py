"""Layers and the module container used by every network in the package.

Parameters are float32 by default; tests build float64 copies for
finite-difference checks by passing ``dtype=np.float64``.  Layers with
randomized initialization take an explicit ``numpy.random.Generator`` so runs
are reproducible from a single seed.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from .tensor import Tensor, concat, gather_last, pad3d, parameter, softmax


class Module:
    """Container tracking parameters, buffers and submodules by name."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, array: np.ndarray) -> None:
        self._buffers[name] = array
        object.__setattr__(self, name, array)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def train(self, mode: bool = True):
        object.__setattr__(self, "training", mode)
        for m in self._modules.values():
            m.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = ""):
        for name, b in self._buffers.items():
            yield prefix + name, b
        for name, m in self._modules.items():
            yield from m.named_buffers(prefix + name + ".")

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {name: p.data for name, p in self.named_parameters()}
        out.update({name: b for name, b in self.named_buffers()})
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        buffers = {}
        stack = [("", self)]
        while stack:
            prefix, mod = stack.pop()
            for name in mod._buffers:
                buffers[prefix + name] = (mod, name)
            for name, sub in mod._modules.items():
                stack.append((prefix + name + ".", sub))
        for name, value in state.items():
            if name in params:
                p = params[name]
                if tuple(value.shape) != tuple(p.data.shape):
                    raise ConfigError(f"shape mismatch for '{name}': {value.shape} vs {p.data.shape}")
                p.data = value.astype(p.data.dtype)
            elif name in buffers:
                mod, bname = buffers[name]
                mod.register_buffer(bname, value.astype(mod._buffers[bname].dtype))
            else:
                raise ConfigError(f"unknown tensor '{name}' in state dict")

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


class ModuleList(Module):
    def __init__(self, modules):
        super().__init__()
        self.items = list(modules)
        for i, m in enumerate(self.items):
            self._modules[str(i)] = m

    def __iter__(self):
        return iter(self.items)

    def __getitem__(self, i):
        return self.items[i]

    def __len__(self):
        return len(self.items)


class Sequential(Module):
    def __init__(self, *modules):
        super().__init__()
        if len(modules) == 1 and isinstance(modules[0], (list, tuple)):
            modules = tuple(modules[0])
        self.steps = ModuleList(modules)

    def forward(self, x):
        for m in self.steps:
            x = m(x)
        return x


class Identity(Module):
    def forward(self, x):
        return x


def _kaiming_uniform(rng: np.random.Generator, fan_in: int, shape, dtype):
    bound = float(np.sqrt(6.0 / fan_in))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, dtype=np.float32, bias: bool = True):
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = parameter(_kaiming_uniform(rng, in_dim, (in_dim, out_dim), dtype), dtype=dtype)
        if bias:
            bb = 1.0 / np.sqrt(in_dim)
            self.bias = parameter(rng.uniform(-bb, bb, size=out_dim).astype(dtype), dtype=dtype)
        else:
            self.bias = None

    def forward(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        if self.bias is not None:
            y = y + self.bias
        return y


class ReLU(Module):
    def forward(self, x):
        return x.relu()


class Tanh(Module):
    def forward(self, x):
        return x.tanh()


class LayerNorm(Module):
    """Normalize the last axis to zero mean / unit variance, then affine."""

    def __init__(self, dim: int, eps: float = 1e-8, dtype=np.float32):
        super().__init__()
        self.eps = eps
        self.gamma = parameter(np.ones(dim, dtype=dtype), dtype=dtype)
        self.beta = parameter(np.zeros(dim, dtype=dtype), dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        norm = xc / (var + self.eps).sqrt()
        return norm * self.gamma + self.beta


class BatchNorm(Module):
    """Batch normalization over all axes except ``feature_axis``.

    Training mode normalizes by the moments of the incoming batch and
    updates running statistics; eval mode uses the stored statistics.
    """

    def __init__(self, num_features: int, feature_axis: int = -1, momentum: float = 0.99,
                 eps: float = 1e-5, dtype=np.float32):
        super().__init__()
        self.num_features = num_features
        self.feature_axis = feature_axis
        self.momentum = momentum
        self.eps = eps
        self.gamma = parameter(np.ones(num_features, dtype=dtype), dtype=dtype)
        self.beta = parameter(np.zeros(num_features, dtype=dtype), dtype=dtype)
        self.register_buffer("running_mean", np.zeros(num_features, dtype=dtype))
        self.register_buffer("running_var", np.ones(num_features, dtype=dtype))

    def _axes_and_shape(self, ndim: int):
        axis = self.feature_axis % ndim
        reduce_axes = tuple(a for a in range(ndim) if a != axis)
        shape = [1] * ndim
        shape[axis] = self.num_features
        return reduce_axes, tuple(shape)

    def forward(self, x: Tensor) -> Tensor:
        reduce_axes, shape = self._axes_and_shape(x.ndim)
        gamma = self.gamma.reshape(shape)
        beta = self.beta.reshape(shape)
        if self.training:
            count = int(np.prod([x.shape[a] for a in reduce_axes]))
            if count < 2:
                raise ValueError("BatchNorm in train mode needs at least 2 samples per feature")
            mu = x.mean(axis=reduce_axes, keepdims=True)
            xc = x - mu
            var = (xc * xc).mean(axis=reduce_axes, keepdims=True)
            m = self.momentum
            self.register_buffer(
                "running_mean",
                (m * self.running_mean + (1.0 - m) * mu.data.reshape(-1)).astype(self.running_mean.dtype),
            )
            self.register_buffer(
                "running_var",
                (m * self.running_var + (1.0 - m) * var.data.reshape(-1)).astype(self.running_var.dtype),
            )
            norm = xc / (var + self.eps).sqrt()
        else:
            mu = self.running_mean.reshape(shape)
            sd = np.sqrt(self.running_var.reshape(shape) + self.eps)
            norm = (x - Tensor(mu)) * Tensor(1.0 / sd)
        return norm * gamma + beta


class Dropout(Module):
    """Inverted dropout.  Rate 0 is an exact identity and draws no randomness."""

    def __init__(self, rate: float, rng: np.random.Generator | None = None):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng

    def forward(self, x: Tensor) -> Tensor:
        if not self.training or self.rate == 0.0:
            return x
        if self.rng is None:
            raise ConfigError("dropout with rate > 0 needs an rng")
        keep = (self.rng.random(x.shape) >= self.rate).astype(x.dtype)
        return x * Tensor(keep * (1.0 / (1.0 - self.rate)))


class Embedding(Module):
    def __init__(self, num_embeddings: int, dim: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        scale = 1.0 / np.sqrt(dim)
        self.weight = parameter(rng.normal(0.0, scale, size=(num_embeddings, dim)).astype(dtype), dtype=dtype)

    def forward(self, idx: np.ndarray) -> Tensor:
        return self.weight[np.asarray(idx, dtype=np.intp)]


class PositionalEncoding(Module):
    """Fixed sinusoidal positions added to a (B, S, D) sequence."""

    def __init__(self, dim: int, max_len: int = 512, dtype=np.float32):
        super().__init__()
        pos = np.arange(max_len, dtype=np.float64)[:, None]
        i = np.arange(dim, dtype=np.float64)[None, :]
        angle = pos / np.power(10000.0, 2.0 * np.floor(i / 2.0) / dim)
        pe = np.where(i % 2 == 0, np.sin(angle), np.cos(angle)).astype(dtype)
        self.register_buffer("pe", pe)

    def forward(self, x: Tensor) -> Tensor:
        return x + Tensor(self.pe[: x.shape[1]])


class MultiheadAttention(Module):
    """Scaled dot-product attention with per-head split/merge (no masking)."""

    def __init__(self, dim: int, n_heads: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        if dim % n_heads != 0:
            raise ConfigError(f"model dim {dim} not divisible by {n_heads} heads")
        self.dim = dim
        self.n_heads = n_heads
        self.head_dim = dim // n_heads
        self.wq = Linear(dim, dim, rng, dtype)
        self.wk = Linear(dim, dim, rng, dtype)
        self.wv = Linear(dim, dim, rng, dtype)
        self.wo = Linear(dim, dim, rng, dtype)

    def _split(self, t: Tensor, batch: int, seq: int) -> Tensor:
        return t.reshape(batch, seq, self.n_heads, self.head_dim).transpose(0, 2, 1, 3)

    def forward(self, q: Tensor, k: Tensor, v: Tensor) -> Tensor:
        batch, seq, _ = q.shape
        qh = self._split(self.wq(q), batch, seq)
        kh = self._split(self.wk(k), batch, k.shape[1])
        vh = self._split(self.wv(v), batch, v.shape[1])
        scores = (qh @ kh.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(self.head_dim))
        attn = softmax(scores, axis=-1)
        out = (attn @ vh).transpose(0, 2, 1, 3).reshape(batch, seq, self.dim)
        return self.wo(out)


class Conv3d(Module):
    """3-D convolution on (B, C, D, H, W) input via patch gather + matmul."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator,
                 ksize: int = 3, stride: int = 1, pad: int = 1, dtype=np.float32, bias: bool = True):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.ksize = ksize
        self.stride = stride
        self.pad = pad
        fan_in = in_channels * ksize ** 3
        self.weight = parameter(
            _kaiming_uniform(rng, fan_in, (out_channels, in_channels, ksize, ksize, ksize), dtype), dtype=dtype
        )
        if bias:
            bb = 1.0 / np.sqrt(fan_in)
            self.bias = parameter(rng.uniform(-bb, bb, size=out_channels).astype(dtype), dtype=dtype)
        else:
            self.bias = None
        self._idx_cache: dict[tuple, tuple] = {}

    def _patch_index(self, c: int, dp: int, hp: int, wp: int):
        key = (c, dp, hp, wp)
        if key not in self._idx_cache:
            k, s = self.ksize, self.stride
            od = (dp - k) // s + 1
            oh = (hp - k) // s + 1
            ow = (wp - k) // s + 1
            base_d = np.arange(od) * s
            base_h = np.arange(oh) * s
            base_w = np.arange(ow) * s
            # out-position grid (od, oh, ow) x kernel grid (c, k, k, k)
            dd = (base_d[:, None, None, None, None, None, None] + np.arange(k)[None, None, None, None, :, None, None])
            hh = (base_h[None, :, None, None, None, None, None] + np.arange(k)[None, None, None, None, None, :, None])
            ww = (base_w[None, None, :, None, None, None, None] + np.arange(k)[None, None, None, None, None, None, :])
            cc = np.arange(c)[None, None, None, :, None, None, None]
            flat = ((cc * dp + dd) * hp + hh) * wp + ww
            idx = flat.reshape(od * oh * ow, c * k ** 3)
            self._idx_cache[key] = (idx, (od, oh, ow))
        return self._idx_cache[key]

    def forward(self, x: Tensor) -> Tensor:
        batch, c, d, h, w = x.shape
        if c != self.in_channels:
            raise ConfigError(f"expected {self.in_channels} input channels, got {c}")
        xp = pad3d(x, self.pad)
        dp, hp, wp = xp.shape[-3:]
        idx, (od, oh, ow) = self._patch_index(c, dp, hp, wp)
        cols = gather_last(xp.reshape(batch, c * dp * hp * wp), idx)
        w2 = self.weight.reshape(self.out_channels, -1).transpose(1, 0)
        y = cols @ w2
        if self.bias is not None:
            y = y + self.bias
        return y.transpose(0, 2, 1).reshape(batch, self.out_channels, od, oh, ow)
