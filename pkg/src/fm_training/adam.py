"""
Adam optimizer with bias-corrected moments
"""
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from kt_errors import ShapeMismatch


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={name: np.zeros_like(array) for name, array in params.items()},
            v={name: np.zeros_like(array) for name, array in params.items()},
        )


def adam_step(state: AdamState, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
              config) -> Tuple[AdamState, Dict[str, np.ndarray]]:
    """
    One Adam update, in place

    m <- b1 m + (1 - b1) g;  v <- b2 v + (1 - b2) g^2
    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)

    `config` provides learning_rate, adam_beta1, adam_beta2 and adam_epsilon.
    """
    for name, array in params.items():
        grad = grads.get(name)
        if grad is None or grad.shape != array.shape:
            got = None if grad is None else grad.shape
            raise ShapeMismatch(f"gradient for '{name}' has shape {got}, expected {array.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(array)
            state.v[name] = np.zeros_like(array)

    state.t += 1
    beta1, beta2 = config.adam_beta1, config.adam_beta2
    bias1 = 1.0 - beta1 ** state.t
    bias2 = 1.0 - beta2 ** state.t

    for name, array in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        array -= config.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + config.adam_epsilon)
    return state, params
