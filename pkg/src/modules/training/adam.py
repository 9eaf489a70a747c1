"""Bias-corrected Adam over dictionaries of parameter arrays"""

from dataclasses import dataclass, field
from typing import Dict, Hashable

import numpy as np

from src.shared.errors import DimensionError, NumericError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8


@dataclass
class AdamState:
    """First/second moment accumulators keyed like the parameters they track"""

    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPSILON
    step: int = 0
    m: Dict[Hashable, np.ndarray] = field(default_factory=dict)
    v: Dict[Hashable, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: Dict[Hashable, np.ndarray],
              grads: Dict[Hashable, np.ndarray], lr: float) -> Dict[Hashable, np.ndarray]:
    """
    One Adam update; returns new arrays and advances state in place

    Parameters without a gradient entry are passed through unchanged.
    """
    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step

    updated = {}
    for key, value in params.items():
        grad = grads.get(key)
        if grad is None:
            updated[key] = value
            continue
        if grad.shape != value.shape:
            raise DimensionError(f"Gradient for {key} has shape {grad.shape}, parameter {value.shape}")
        m = state.m.get(key)
        v = state.v.get(key)
        if m is None:
            m = np.zeros_like(value)
            v = np.zeros_like(value)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(v))):
            raise NumericError(f"Non-finite Adam moments for {key}", iteration=state.step)
        state.m[key] = m
        state.v[key] = v
        m_hat = m / correction1
        v_hat = v / correction2
        updated[key] = value - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return updated
