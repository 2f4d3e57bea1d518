"""AdamW: Adam with decoupled weight decay.

Decay multiplies parameters by (1 - lr * weight_decay) each step, outside the
moment estimates, so a zero-gradient trajectory is exactly geometric decay.
Updates run in place through preallocated scratch buffers; parameter tensors
at ~1M elements make allocation churn the dominant cost otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamWState:
    lr: float = 0.0015
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.001
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    _scratch: list = field(default_factory=list)

    def ensure_moments(self, params: list[np.ndarray]) -> None:
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
            self._scratch = [np.empty_like(p) for p in params]


def adamw_step(state: AdamWState, params: list[np.ndarray], grads: list[np.ndarray]) -> bool:
    """One in-place update of params. Returns False (step skipped, state
    untouched) if any gradient is non-finite."""
    state.ensure_moments(params)
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ValueError("params and grads must have matching shapes")
    if any(not np.all(np.isfinite(g)) for g in grads):
        return False

    state.t += 1
    b1, b2, t = state.beta1, state.beta2, state.t
    bias1 = 1.0 - b1**t
    sqrt_bias2 = np.sqrt(1.0 - b2**t)
    decay = 1.0 - state.lr * state.weight_decay
    step_scale = state.lr / bias1
    for p, g, m, v, s in zip(params, grads, state.m, state.v, state._scratch):
        # m += (1-b1)(g - m);  v += (1-b2)(g^2 - v)
        np.subtract(g, m, out=s)
        s *= 1.0 - b1
        m += s
        np.multiply(g, g, out=s)
        s -= v
        s *= 1.0 - b2
        v += s
        # denominator sqrt(v_hat) + eps, with v_hat = v / (1 - b2^t)
        np.sqrt(v, out=s)
        s /= sqrt_bias2
        s += state.eps
        np.divide(m, s, out=s)
        p *= decay
        s *= step_scale
        p -= s
    return True
