"""Adam with an l2 penalty folded into the gradient."""

from __future__ import annotations

import numpy as np

from .errors import ContractError
from .layers import unique_parameters
from .tensor import Parameter


class Adam:
    """Bias-corrected Adam; weight_decay adds wd*param to the gradient
    before the moment updates."""

    def __init__(self, params, lr: float = 2e-4, beta1: float = 0.5,
                 beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.params: list[Parameter] = unique_parameters(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        for p in self.params:
            if p.grad is None:
                raise ContractError("adam_step called with missing gradients")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for i, p in enumerate(self.params):
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / bc1
            v_hat = self.v[i] / bc2
            p.data -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.data.dtype)

    # checkpoint support: moments exposed as named tensors

    def state_tensors(self, prefix: str = "adam."):
        out = {f"{prefix}step": np.array([float(self.step_count)])}
        for i in range(len(self.params)):
            out[f"{prefix}m.{i}"] = self.m[i]
            out[f"{prefix}v.{i}"] = self.v[i]
        return out

    def load_state_tensors(self, table: dict, prefix: str = "adam.") -> None:
        self.step_count = int(table[f"{prefix}step"][0])
        for i in range(len(self.params)):
            self.m[i] = table[f"{prefix}m.{i}"].astype(self.m[i].dtype)
            self.v[i] = table[f"{prefix}v.{i}"].astype(self.v[i].dtype)
