"""Minimal Adam optimizer with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass
class AdamState:
    """One optimized tensor plus its first/second moment estimates."""

    value: np.ndarray
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)
    step: int = 0

    def __post_init__(self):
        self.value = np.array(self.value, dtype=np.float64)
        if self.m is None:
            self.m = np.zeros_like(self.value)
        if self.v is None:
            self.v = np.zeros_like(self.value)


def adam_step(state: AdamState, grad: np.ndarray, lr: float) -> AdamState:
    """One Adam update (beta1=0.9, beta2=0.999, eps=1e-8); mutates and returns state."""
    grad = np.asarray(grad, dtype=np.float64)
    state.step += 1
    state.m = BETA1 * state.m + (1.0 - BETA1) * grad
    state.v = BETA2 * state.v + (1.0 - BETA2) * grad * grad
    m_hat = state.m / (1.0 - BETA1**state.step)
    v_hat = state.v / (1.0 - BETA2**state.step)
    state.value = state.value - lr * m_hat / (np.sqrt(v_hat) + EPS)
    return state
