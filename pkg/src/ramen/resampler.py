"""Adjustable spatial resampling between native and target ground sampling
distances.

Latent grids are bilinearly aligned to the target resolution, then refined by
a residual mixture of pointwise (1x1) channel-mixing experts whose convex
weights are gated on the log interpolation ratio. Experts start at zero, so a
freshly built resampler is plain interpolation; the gate's final layer starts
at zero, so every expert initially receives equal weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .encodings import ratio_pe
from .numerics import (
    DimensionError,
    Linear,
    Module,
    Parameter,
    Tensor,
    bilinear_resize,
    gelu,
    softmax,
    trunc_normal,
    tsum,
)


def log_ratio(gsd_in: float, gsd_target: float) -> float:
    """Log interpolation ratio. Computed as a difference of logs so that
    swapping the arguments negates the value exactly."""
    if gsd_in <= 0 or gsd_target <= 0:
        raise ValueError(f"ground sampling distances must be positive, got {gsd_in}, {gsd_target}")
    return math.log(gsd_in) - math.log(gsd_target)


def target_dims(h: int, w: int, gsd_in: float, gsd_target: float) -> tuple[int, int]:
    """Grid extents after resampling: round(exp(sigma) * extent), floored at 1.

    Rounding is half-away-from-zero so the rule is symmetric in the ratio.
    """
    if h < 1 or w < 1:
        raise ValueError(f"grid extents must be positive, got ({h}, {w})")
    scale = math.exp(log_ratio(gsd_in, gsd_target))
    return (
        max(1, int(math.floor(h * scale + 0.5))),
        max(1, int(math.floor(w * scale + 0.5))),
    )


@dataclass(frozen=True)
class ResampleSpec:
    """Geometry of one native-to-target resampling."""

    gsd_in: float
    gsd_target: float
    h_in: int
    w_in: int
    h_out: int
    w_out: int

    @classmethod
    def from_dims(cls, h: int, w: int, gsd_in: float, gsd_target: float) -> "ResampleSpec":
        h_out, w_out = target_dims(h, w, gsd_in, gsd_target)
        return cls(gsd_in, gsd_target, h, w, h_out, w_out)

    @property
    def sigma(self) -> float:
        return log_ratio(self.gsd_in, self.gsd_target)


class MixtureGate(Module):
    """Ratio encoding -> MLP -> softmax over the expert weights."""

    def __init__(self, d: int, n_experts: int, rng: np.random.Generator,
                 hidden_div: int = 4, dtype=np.float64):
        hidden = max(1, d // hidden_div)
        self.fc1 = Linear(d, hidden, rng, dtype)
        # zero-init so all experts start at weight 1/n_experts
        self.fc2 = Linear(hidden, n_experts, rng, dtype, zero_init=True)
        self.d = d
        self.n_experts = n_experts
        self.dtype = dtype

    def weights(self, sigma: float) -> Tensor:
        enc = Tensor(ratio_pe(sigma, self.d), dtype=self.dtype)
        logits = self.fc2(gelu(self.fc1(enc.reshape(1, self.d))))
        return softmax(logits, axis=-1).reshape(self.n_experts)


class SpatialResampler(Module):
    """Bilinear alignment plus the gated residual expert mixture.

    The same module resamples in either direction: the forward path maps a
    native grid to the target resolution, the inverse path (used on the
    reconstruction side by a separately parameterized instance) negates the
    ratio and maps back to the stored native extents.
    """

    def __init__(self, d: int, n_experts: int, rng: np.random.Generator,
                 gate_hidden_div: int = 4, dtype=np.float64):
        self.gate = MixtureGate(d, n_experts, rng, gate_hidden_div, dtype)
        # pointwise channel-mixing experts, no bias, zero-init residual
        self.experts = Parameter(np.zeros((n_experts, d, d)), dtype=dtype)
        self.d = d
        self.n_experts = n_experts

    def randomize_experts(self, rng: np.random.Generator, std: float = 0.02):
        """Replace the zero residual with random expert weights (test helper)."""
        self.experts.data = trunc_normal(rng, self.experts.shape, std).astype(self.experts.dtype)

    def apply(self, x: Tensor, sigma: float, out_hw: tuple[int, int]) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.d:
            raise DimensionError(f"expected (T, {self.d}, H, W) input, got {x.shape}")
        t, d, _, _ = x.shape
        h_out, w_out = out_hw
        z = bilinear_resize(x, h_out, w_out)
        w = self.gate.weights(sigma)
        mixed = tsum(w.reshape(self.n_experts, 1, 1) * self.experts, axis=0)  # (D, D)
        flat = z.reshape(t, d, h_out * w_out).transpose(0, 2, 1)  # (T, P, D)
        residual = (flat @ mixed).transpose(0, 2, 1).reshape(t, d, h_out, w_out)
        return z + residual

    def resample(self, x: Tensor, spec: ResampleSpec) -> Tensor:
        if x.shape[-2:] != (spec.h_in, spec.w_in):
            raise DimensionError(f"input grid {x.shape[-2:]} does not match spec {(spec.h_in, spec.w_in)}")
        return self.apply(x, spec.sigma, (spec.h_out, spec.w_out))

    def resample_inverse(self, y: Tensor, spec: ResampleSpec) -> Tensor:
        if y.shape[-2:] != (spec.h_out, spec.w_out):
            raise DimensionError(f"input grid {y.shape[-2:]} does not match spec {(spec.h_out, spec.w_out)}")
        return self.apply(y, -spec.sigma, (spec.h_in, spec.w_in))
