"""Finite-difference gradient oracle.

Central differences against the reverse-mode gradient; the reference path
never touches the autodiff graph beyond evaluating the function, so it stays
an independent check."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor


def analytic_gradient(f: Callable[[Tensor], Tensor], x: np.ndarray) -> np.ndarray:
    t = Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)
    loss = f(t)
    loss.backward()
    return np.zeros_like(t.data) if t.grad is None else t.grad.copy()


def central_difference(f: Callable[[Tensor], Tensor], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(Tensor(x.copy())).item()
        flat[i] = orig - eps
        lo = f(Tensor(x.copy())).item()
        flat[i] = orig
        gf[i] = (hi - lo) / (2.0 * eps)
    return g


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def finite_diff_check(f: Callable[[Tensor], Tensor], x: np.ndarray, eps: float = 1e-5) -> float:
    """Max over coordinates of the relative error between reverse-mode and
    central-difference gradients of a scalar-valued ``f``."""
    return relative_error(analytic_gradient(f, x), central_difference(f, x, eps))
