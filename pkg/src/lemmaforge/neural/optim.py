from __future__ import annotations

import numpy as np


def adam_step(params, lr, beta1, beta2, eps, t, state):
    """One bias-corrected Adam update, in place.

    ``state`` maps parameter name to its (m, v) moment arrays and is created
    lazily. ``t`` is the 1-based step count.
    """
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if t < 1:
        raise ValueError("adam step count starts at 1")
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p in params:
        if p.name not in state:
            state[p.name] = (np.zeros_like(p.value), np.zeros_like(p.value))
        m, v = state[p.name]
        if m.shape != p.grad.shape:
            raise ValueError(f"adam: state shape mismatch for {p.name}")
        m *= beta1
        m += (1.0 - beta1) * p.grad
        v *= beta2
        v += (1.0 - beta2) * p.grad * p.grad
        p.value -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.state = {}

    def step(self):
        self.t += 1
        adam_step(self.params, self.lr, self.beta1, self.beta2, self.eps, self.t, self.state)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


def clip_grad_norm(params, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``.
    Returns the norm before clipping."""
    total = float(np.sqrt(sum(float((p.grad * p.grad).sum()) for p in params)))
    if total > max_norm > 0:
        scale = max_norm / (total + 1e-12)
        for p in params:
            p.grad *= scale
    return total
