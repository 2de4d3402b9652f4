"""AdamW with decoupled weight decay."""

from __future__ import annotations

import numpy as np

from .tensor import Parameter


class AdamW:
    """Adam moments plus weight decay applied directly to the parameters,
    not folded into the gradient."""

    def __init__(self, params: list[Parameter], lr: float = 1.5e-4,
                 betas: tuple[float, float] = (0.9, 0.95),
                 eps: float = 1e-8, weight_decay: float = 0.05):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self, lr: float | None = None):
        if lr is not None:
            self.lr = lr
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                g = np.zeros_like(p.data)
            else:
                g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data -= (self.lr * update + self.lr * self.weight_decay * p.data).astype(p.dtype)


def adam_step(optimizer: AdamW, lr: float | None = None):
    """Single optimizer update; thin functional alias."""
    optimizer.step(lr)
