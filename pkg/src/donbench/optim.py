"""Adam optimizer with bias correction, operating on a ParameterStore."""

from dataclasses import dataclass, field

import numpy as np

from .layers import ParameterStore


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: ParameterStore, gradients: dict, state: AdamState, lr=None):
    """One bias-corrected Adam update; mutates `params` and `state` in place.

    `gradients` maps parameter names to arrays (missing or None entries are
    treated as zero).  `lr` overrides the stored learning rate for this step
    (used for schedules).  Returns the mutated pair for convenience.
    """
    state.step += 1
    t = state.step
    lr_eff = state.learning_rate if lr is None else lr
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t
    for name, tensor in params.items():
        g = gradients.get(name)
        if g is None:
            g = np.zeros_like(tensor.data)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(tensor.data)
            state.v[name] = np.zeros_like(tensor.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / correction1
        v_hat = v / correction2
        tensor.data -= lr_eff * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params, state


def inverse_time_lr(base_lr: float, decay: float, step: int) -> float:
    """Inverse-time learning-rate schedule; `decay == 0` keeps it constant."""
    return base_lr / (1.0 + decay * step)
