from dataclasses import dataclass

import numpy as np

from .nets import ShapeError


@dataclass
class AdamState:
    m: list
    v: list

    @classmethod
    def zeros_like(cls, params):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state, lr=1e-3, beta1=0.9, beta2=0.999, eps_hat=1e-8, step_index=1):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``.

    Inputs are left untouched.
    """
    if step_index < 1:
        raise ValueError("step_index counts from 1")
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("params, grads and state differ in length")
    bc1 = 1.0 - beta1**step_index
    bc2 = 1.0 - beta2**step_index
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"shape mismatch {p.shape} vs {g.shape}")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_params.append(p - lr * m_hat / (np.sqrt(v_hat) + eps_hat))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(new_m, new_v)


class Adam:
    """Stateful wrapper that applies :func:`adam_step` to a net in place."""

    def __init__(self, net, lr=1e-3, beta1=0.9, beta2=0.999, eps_hat=1e-8):
        self.net = net
        self.lr, self.beta1, self.beta2, self.eps_hat = lr, beta1, beta2, eps_hat
        self.state = AdamState.zeros_like(net.parameters())
        self.t = 0

    def step(self, grads):
        self.t += 1
        params, self.state = adam_step(
            self.net.parameters(), grads, self.state, self.lr, self.beta1, self.beta2, self.eps_hat, self.t
        )
        self.net.set_parameters(params)
