"""
Link functions mapping a real score to a probability
"""
from enum import Enum

import numpy as np
from scipy import special

PROB_EPS = 1e-12
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class LinkFunction(str, Enum):
    SIGMOID = "sigmoid"
    PROBIT = "probit"

    def __call__(self, z):
        """Probability psi(z), unclamped"""
        if self == LinkFunction.SIGMOID:
            return special.expit(z)
        return 0.5 * special.erfc(-np.asarray(z, dtype=np.float64) / np.sqrt(2.0))

    def loss_grad(self, z: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Derivative of the per-instance log loss with respect to z"""
        z = np.asarray(z, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if self == LinkFunction.SIGMOID:
            return special.expit(z) - y
        # -log Phi(s z) with s = +-1; phi/Phi ratio taken in log space
        s = 2.0 * y - 1.0
        sz = s * z
        log_pdf = -0.5 * sz * sz - _LOG_SQRT_2PI
        return -s * np.exp(log_pdf - special.log_ndtr(sz))


def clamp(p):
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def log_loss(p: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-instance log loss of clamped probabilities"""
    p = clamp(np.asarray(p, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
