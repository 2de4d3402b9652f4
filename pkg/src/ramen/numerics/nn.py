"""Small module system and the transformer building blocks shared by the
encoder, decoder and temporal stages."""

from __future__ import annotations

import math

import numpy as np

from .functional import gelu, layer_norm, linear, softmax
from .tensor import Parameter, Tensor


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal(0, std) samples redrawn until within 2 std, as in common ViT init."""
    out = rng.standard_normal(shape)
    for _ in range(16):
        bad = np.abs(out) > 2.0
        if not bad.any():
            break
        out[bad] = rng.standard_normal(int(bad.sum()))
    return np.clip(out, -2.0, 2.0) * std


def xavier_uniform(rng: np.random.Generator, shape) -> np.ndarray:
    """Width-scaled uniform init for affine weights (fan_in, fan_out)."""
    limit = math.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, shape)


class Module:
    """Container with recursive parameter discovery in attribute order."""

    def named_parameters(self, prefix: str = ""):
        for key, value in vars(self).items():
            path = f"{prefix}.{key}" if prefix else key
            if isinstance(value, Parameter):
                value.name = path
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(path)
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    sub = f"{path}.{i}"
                    if isinstance(item, Parameter):
                        item.name = sub
                        yield sub, item
                    elif isinstance(item, Module):
                        yield from item.named_parameters(sub)

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator,
                 dtype=np.float64, zero_init: bool = False, bias: bool = True):
        if zero_init:
            w = np.zeros((d_in, d_out))
        else:
            w = xavier_uniform(rng, (d_in, d_out))
        self.weight = Parameter(w, dtype=dtype)
        self.bias = Parameter(np.zeros(d_out), dtype=dtype) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, d: int, dtype=np.float64, eps: float = 1e-6):
        self.weight = Parameter(np.ones(d), dtype=dtype)
        self.bias = Parameter(np.zeros(d), dtype=dtype)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.weight, self.bias, self.eps)


class Mlp(Module):
    def __init__(self, d: int, hidden: int, rng, dtype=np.float64):
        self.fc1 = Linear(d, hidden, rng, dtype)
        self.fc2 = Linear(hidden, d, rng, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(gelu(self.fc1(x)))


class MultiHeadSelfAttention(Module):
    """Scaled dot-product self-attention over (..., S, D) sequences."""

    def __init__(self, d: int, n_heads: int, rng, dtype=np.float64):
        if d % n_heads != 0:
            raise ValueError(f"embedding dim {d} not divisible by {n_heads} heads")
        self.qkv = Linear(d, 3 * d, rng, dtype)
        self.proj = Linear(d, d, rng, dtype)
        self.n_heads = n_heads
        self.head_dim = d // n_heads

    def __call__(self, x: Tensor) -> Tensor:
        squeeze = x.ndim == 2
        if squeeze:
            x = x.reshape(1, *x.shape)
        b, s, d = x.shape
        h, hd = self.n_heads, self.head_dim
        qkv = self.qkv(x).reshape(b, s, 3, h, hd).transpose(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]  # (b, h, s, hd)
        scale = 1.0 / math.sqrt(hd)
        if s <= 4 < b:
            # huge batch of tiny sequences (per-pixel time attention): batched
            # GEMMs would dominate on dispatch overhead, so reduce explicitly
            scores = (q.reshape(b, h, s, 1, hd) * k.reshape(b, h, 1, s, hd)).sum(axis=-1) * scale
            attn = softmax(scores, axis=-1)
            ctx = (attn.reshape(b, h, s, s, 1) * v.reshape(b, h, 1, s, hd)).sum(axis=-2)
        else:
            scores = (q @ k.transpose(0, 1, 3, 2)) * scale
            attn = softmax(scores, axis=-1)
            ctx = attn @ v
        ctx = ctx.transpose(0, 2, 1, 3).reshape(b, s, d)
        out = self.proj(ctx)
        return out.reshape(s, d) if squeeze else out


class TransformerBlock(Module):
    """Pre-norm block: x + attn(ln(x)), then x + mlp(ln(x))."""

    def __init__(self, d: int, n_heads: int, rng, dtype=np.float64, mlp_ratio: int = 4):
        self.norm1 = LayerNorm(d, dtype)
        self.attn = MultiHeadSelfAttention(d, n_heads, rng, dtype)
        self.norm2 = LayerNorm(d, dtype)
        self.mlp = Mlp(d, mlp_ratio * d, rng, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))
