"""Neural primitives on top of the autodiff tensor: softmax, GELU, layer norm,
affine maps, bilinear resizing. Each is a single graph node with an analytic
backward rule."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import erf

from .tensor import DimensionError, Tensor, _node, _unbroadcast, matmul


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-stabilized softmax along ``axis``; outputs sum to 1 along it."""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        x._accumulate(y * (g - dot))

    return _node(y, (x,), backward)


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) Gaussian error linear unit."""
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    cdf = 0.5 * (1.0 + erf(x.data * inv_sqrt2))
    y = x.data * cdf

    def backward(g):
        pdf = np.exp(-0.5 * x.data * x.data) * (1.0 / math.sqrt(2.0 * math.pi))
        x._accumulate(g * (cdf + x.data * pdf))

    return _node(y, (x,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise DimensionError(
            f"layer_norm affine shapes {gamma.shape}/{beta.shape} do not match feature dim {x.shape[-1]}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    y = xhat * gamma.data + beta.data

    def backward(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).reshape(-1, x.shape[-1]).sum(axis=0))
        if beta.requires_grad:
            beta._accumulate(g.reshape(-1, x.shape[-1]).sum(axis=0))
        if x.requires_grad:
            gh = g * gamma.data
            m1 = gh.mean(axis=-1, keepdims=True)
            m2 = (gh * xhat).mean(axis=-1, keepdims=True)
            x._accumulate(inv * (gh - m1 - xhat * m2))

    return _node(y, (x, gamma, beta), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map over the last axis: ``x @ weight + bias`` with weight (in, out).

    Leading axes are flattened so the product runs as one GEMM instead of a
    batched loop of small ones."""
    if x.shape[-1] != weight.shape[0]:
        raise DimensionError(f"linear input dim {x.shape} does not match weight {weight.shape}")
    lead = x.shape[:-1]
    flat = x.reshape(int(np.prod(lead)) if lead else 1, x.shape[-1]) if x.ndim != 2 else x
    y = matmul(flat, weight)
    if bias is not None:
        y = y + bias
    return y.reshape(*lead, weight.shape[1]) if x.ndim != 2 else y


@lru_cache(maxsize=512)
def _interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic 1D interpolation matrix (n_out, n_in) using half-pixel
    centers with edge clamping. Exact identity when n_in == n_out."""
    m = np.zeros((n_out, n_in), dtype=np.float64)
    scale = n_in / n_out
    for o in range(n_out):
        src = (o + 0.5) * scale - 0.5
        src = min(max(src, 0.0), n_in - 1.0)
        i0 = int(np.floor(src))
        frac = src - i0
        i1 = min(i0 + 1, n_in - 1)
        m[o, i0] += 1.0 - frac
        m[o, i1] += frac
    return m


def bilinear_resize(x: Tensor, h_out: int, w_out: int) -> Tensor:
    """Resize the trailing two axes to (h_out, w_out) by separable bilinear
    interpolation (half-pixel sampling, edge-clamped)."""
    if h_out < 1 or w_out < 1:
        raise ValueError(f"target extents must be positive, got ({h_out}, {w_out})")
    if x.ndim < 2:
        raise DimensionError(f"bilinear_resize needs at least 2 axes, got shape {x.shape}")
    h_in, w_in = x.shape[-2], x.shape[-1]
    if (h_in, w_in) == (h_out, w_out):
        return x
    ah = _interp_matrix(h_in, h_out).astype(x.dtype)
    aw = _interp_matrix(w_in, w_out).astype(x.dtype)
    data = np.matmul(np.matmul(ah, x.data), aw.T)

    def backward(g):
        x._accumulate(np.matmul(np.matmul(ah.T, g), aw))

    return _node(data, (x,), backward)
