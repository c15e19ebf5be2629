"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")


def adam_step(params: dict, grads: dict, state: AdamState) -> dict:
    """Update ``params`` (name -> ndarray) in place and return them.

    A parameter whose gradient is ``None`` or missing is skipped entirely:
    its moments and step count stay where they were.
    """
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
            state.step[name] = 0
        state.step[name] += 1
        t = state.step[name]
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        p -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype, copy=False)
    return params


class Adam:
    """Convenience wrapper driving :func:`adam_step` over tensors that hold ``.grad``."""

    def __init__(self, tensors: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.tensors = tensors
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self):
        params = {k: t.data for k, t in self.tensors.items()}
        grads = {k: t.grad for k, t in self.tensors.items()}
        adam_step(params, grads, self.state)

    def zero_grad(self):
        for t in self.tensors.values():
            t.grad = None
