"""Adam optimizer with bias-corrected first and second moments."""

from __future__ import annotations

import numpy as np

__all__ = ["Adam", "adam_step"]


class Adam:
    """Per-parameter moment state for Adam.

    Update, per parameter tensor theta with gradient g:
        m <- beta1 m + (1 - beta1) g
        v <- beta2 v + (1 - beta2) g^2
        theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
    with m_hat, v_hat the bias-corrected moments at the shared step count.
    """

    def __init__(self, params: list[np.ndarray], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray], lr: float) -> None:
        if len(params) != len(self.m) or len(grads) != len(params):
            raise ValueError("parameter/gradient count does not match optimizer state")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if p.shape != g.shape or p.shape != m.shape:
                raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, state {m.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def adam_step(network, grads: list[np.ndarray], learning_rate: float) -> None:
    """Apply one Adam update to a network's parameters in place.

    Lazily attaches the optimizer state to the network on first use and
    advances the shared step counter.
    """
    params = network.params()
    opt = getattr(network, "adam", None)
    if opt is None:
        opt = Adam(params)
        network.adam = opt
    opt.step(params, grads, learning_rate)
