"""Adam optimizer with bias correction.

m_t = b1*m + (1-b1)*g,  v_t = b2*v + (1-b2)*g^2
p  -= lr * (m_t / (1-b1^t)) / (sqrt(v_t / (1-b2^t)) + eps)

Pure update: returns fresh parameter and state dicts so a training run can
own its trajectory and callers can snapshot any step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_init(params: dict, grads_keys=None) -> AdamState:
    keys = grads_keys if grads_keys is not None else params.keys()
    return AdamState(
        m={k: np.zeros_like(params[k]) for k in keys},
        v={k: np.zeros_like(params[k]) for k in keys},
    )


def adam_step(params: dict, grads: dict, state: AdamState, lr: float, step_index: int,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One update over every key in ``grads``; other params pass through."""
    assert step_index >= 1
    new_params = dict(params)
    new_m = dict(state.m)
    new_v = dict(state.v)
    bc1 = 1.0 - beta1 ** step_index
    bc2 = 1.0 - beta2 ** step_index
    for k, g in grads.items():
        m = beta1 * state.m.get(k, 0.0) + (1.0 - beta1) * g
        v = beta2 * state.v.get(k, 0.0) + (1.0 - beta2) * np.square(g)
        new_m[k], new_v[k] = m, v
        update = (m / bc1) / (np.sqrt(v / bc2) + eps)
        new_params[k] = params[k] - (lr * update).astype(params[k].dtype, copy=False)
    return new_params, AdamState(m=new_m, v=new_v)
