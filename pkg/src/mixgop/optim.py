"""Minimal full-batch Adam used by the classifier and attention training."""

from __future__ import annotations

import numpy as np


class Adam:
    """Adam update rule for a single parameter array."""

    def __init__(self, shape, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        if lr <= 0 or not (0 <= beta1 < 1) or not (0 <= beta2 < 1):
            raise ValueError("invalid Adam hyperparameters")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def update(self, grad: np.ndarray) -> np.ndarray:
        """Return the parameter delta for one gradient step."""
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad**2
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return -self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)
