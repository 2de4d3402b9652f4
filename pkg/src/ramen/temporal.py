"""Temporal aggregation and expansion.

Aggregation runs per spatial location: acquisition-day encodings are added to
each timestep, channel groups attend to a learned master query per head, and
the concatenated head outputs pass through an output affine map. With a single
timestep the attention weight is 1, so the op reduces to the value/output
affine path and never depends on the queries.

Expansion (the reconstruction mirror) replicates a single feature map across
the requested timestamps, enriches each copy with its day encoding, and runs
one self-attention block along the time axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .encodings import day_pe_matrix
from .numerics import (
    DimensionError,
    Linear,
    Module,
    Parameter,
    Tensor,
    TransformerBlock,
    softmax,
    trunc_normal,
)


@dataclass(frozen=True)
class TimeStamps:
    days: tuple[int, ...]

    def __post_init__(self):
        if not self.days:
            raise ValueError("at least one acquisition day required")
        for day in self.days:
            if not 1 <= day <= 366:
                raise ValueError(f"day of year out of range: {day}")
        if any(b <= a for a, b in zip(self.days, self.days[1:])):
            raise ValueError(f"acquisition days must be strictly increasing: {self.days}")

    def __len__(self):
        return len(self.days)


class TemporalAggregator(Module):
    """Master-query attention collapsing (T, D, H, W) to (D, H, W)."""

    def __init__(self, d: int, rng: np.random.Generator, n_heads: int = 16,
                 key_dim: int = 8, value_mult: int = 3, dtype=np.float64):
        if (value_mult * d) % n_heads != 0:
            raise ValueError(f"value width {value_mult * d} not divisible by {n_heads} heads")
        self.value = Linear(d, value_mult * d, rng, dtype)
        self.key = Linear(d, n_heads * key_dim, rng, dtype)
        self.query = Parameter(trunc_normal(rng, (n_heads, key_dim)), dtype=dtype)
        self.out = Linear(value_mult * d, d, rng, dtype)
        self.d = d
        self.n_heads = n_heads
        self.key_dim = key_dim
        self.value_mult = value_mult
        self.dtype = dtype

    def aggregate(self, x: Tensor, stamps: TimeStamps) -> Tensor:
        t, d, h, w = x.shape
        if t != len(stamps):
            raise DimensionError(f"{t} timesteps but {len(stamps)} acquisition days")
        nh, dk = self.n_heads, self.key_dim
        dv = self.value_mult * d // nh
        p = h * w
        u = x.reshape(t, d, p).transpose(2, 0, 1)  # (P, T, D)
        u = u + Tensor(day_pe_matrix(stamps.days, d), dtype=self.dtype)
        v = self.value(u).reshape(p, t, nh, dv).transpose(0, 2, 1, 3)  # (P, nh, T, dv)
        k = self.key(u).reshape(p, t, nh, dk).transpose(0, 2, 1, 3)  # (P, nh, T, dk)
        # master-query scores and the weighted sum reduce over tiny T; explicit
        # broadcast reductions beat batched matmul dispatch here
        scores = (k * self.query.reshape(nh, 1, dk)).sum(axis=-1, keepdims=True) * (
            1.0 / math.sqrt(dk)
        )  # (P, nh, T, 1)
        attn = softmax(scores, axis=-2)
        ctx = (attn * v).sum(axis=-2)  # (P, nh, dv)
        merged = ctx.reshape(p, nh * dv)
        out = self.out(merged)  # (P, D)
        return out.transpose(1, 0).reshape(d, h, w)


class TemporalExpander(Module):
    """Replicate (D, H, W) across T timestamps and mix along time."""

    def __init__(self, d: int, n_heads: int, rng: np.random.Generator,
                 dtype=np.float64, mlp_ratio: int = 4):
        self.block = TransformerBlock(d, n_heads, rng, dtype, mlp_ratio)
        self.d = d
        self.dtype = dtype

    def expand(self, x: Tensor, stamps: TimeStamps) -> Tensor:
        d, h, w = x.shape
        t = len(stamps)
        p = h * w
        base = x.reshape(d, p).transpose(1, 0).reshape(p, 1, d)
        tokens = base + Tensor(day_pe_matrix(stamps.days, d), dtype=self.dtype)  # (P, T, D)
        mixed = self.block(tokens)
        return mixed.transpose(1, 2, 0).reshape(t, d, h, w)
