"""Optimizers: AdamW (decoupled weight decay) and plain SGD."""

from __future__ import annotations

import numpy as np

__all__ = ["AdamW", "Sgd"]


class AdamW:
    """AdamW with bias correction and decoupled weight decay.

    The decay step p <- p - lr * wd * p is applied before the Adam
    update, independent of the gradient moments.
    """

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=1e-2):
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self._m = [np.zeros_like(p.value) for p in self.params]
        self._v = [np.zeros_like(p.value) for p in self.params]

    def step(self):
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            if g is None:
                continue
            if g.shape != p.value.shape:
                raise ValueError(
                    f"gradient shape {g.shape} does not match parameter "
                    f"shape {p.value.shape}")
            if self.weight_decay:
                p.value -= self.lr * self.weight_decay * p.value
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.value -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class Sgd:
    """Plain gradient descent: p <- p - lr * grad."""

    def __init__(self, params, lr=1e-3):
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.params = list(params)
        self.lr = lr
        self.step_count = 0

    def step(self):
        self.step_count += 1
        for p in self.params:
            if p.grad is None:
                continue
            if p.grad.shape != p.value.shape:
                raise ValueError(
                    f"gradient shape {p.grad.shape} does not match parameter "
                    f"shape {p.value.shape}")
            p.value -= self.lr * p.grad
