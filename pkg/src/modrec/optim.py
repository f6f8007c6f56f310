"""Adam optimizer."""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, ContractError, DimensionError
from .params import ParameterStore


def adam_update(param: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray, *,
                lr: float, beta1: float, beta2: float, eps: float, t: int) -> None:
    """One bias-corrected Adam update, in place on ``param``, ``m`` and ``v``."""
    if t < 1:
        raise ContractError(f"Adam step counter must start at 1, got {t}")
    if not (param.shape == grad.shape == m.shape == v.shape):
        raise DimensionError(
            f"Adam buffers disagree: param {param.shape}, grad {grad.shape}, m {m.shape}, v {v.shape}"
        )
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)


class Adam:
    def __init__(self, store: ParameterStore, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ConfigurationError(f"learning rate must be positive, got {lr}", field="lr")
        self.store = store
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in store.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in store.items()}

    def step(self) -> None:
        """Apply one update using the grads currently held by the store.

        Parameters without a gradient are treated as having a zero gradient.
        """
        self.t += 1
        for k, p in self.store.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            adam_update(p.data, g, self.m[k], self.v[k], lr=self.lr, beta1=self.beta1,
                        beta2=self.beta2, eps=self.eps, t=self.t)
