"""
FM component: per-entity biases plus pairwise embedding interactions
"""
from typing import Tuple

import numpy as np

from kt_errors import IndexOutOfRange
from fm_model.params import FmParams
from slam_data.encoder import SparseInstance


def check_entities(entities: np.ndarray, n_entities: int):
    if entities.size and (entities.min() < 1 or entities.max() > n_entities):
        raise IndexOutOfRange(f"entity indices must lie in 1..{n_entities}")


def fm_forward(params: FmParams, x: SparseInstance) -> float:
    """
    y_FM = sum_k w_k x_k + sum_{k<l} x_k x_l <v_k, v_l>

    The pairwise term uses 1/2 sum_f [(sum_k x_k v_kf)^2 - sum_k x_k^2 v_kf^2].
    """
    entities, values = x.to_arrays()
    check_entities(entities, params.N)
    rows = entities - 1

    linear = float(np.dot(params.w[rows], values)) + float(params.w0[0])
    if params.d == 0 or rows.size == 0:
        return linear

    xv = values[:, None] * params.V[rows]
    summed = xv.sum(axis=0)
    pairwise = 0.5 * float(np.sum(summed * summed - np.sum(xv * xv, axis=0)))
    return linear + pairwise


def fm_forward_batch(params: FmParams, rows: np.ndarray, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Batched FM output

    Args:
        rows: (B, C) zero-based entity rows
        values: (B, C) entity values

    Returns:
        y_FM of shape (B,) and the embedding sums S of shape (B, d) kept for backward
    """
    y = np.sum(params.w[rows] * values, axis=1) + params.w0[0]
    if params.d == 0:
        return y, np.zeros((rows.shape[0], 0))

    xv = values[:, :, None] * params.V[rows]
    summed = xv.sum(axis=1)
    y = y + 0.5 * np.sum(summed * summed - np.sum(xv * xv, axis=1), axis=1)
    return y, summed


def fm_backward_batch(params: FmParams, rows: np.ndarray, values: np.ndarray, summed: np.ndarray,
                      dz: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Gradients of sum_i dz_i * y_FM(x_i) with respect to w, V and w0

    dy/dv_kf = x_k (S_f - x_k v_kf) for each active k.
    """
    grad_w = np.zeros_like(params.w)
    np.add.at(grad_w, rows, dz[:, None] * values)

    grad_V = np.zeros_like(params.V)
    if params.d > 0:
        xv = values[:, :, None] * params.V[rows]
        contrib = (dz[:, None] * values)[:, :, None] * (summed[:, None, :] - xv)
        np.add.at(grad_V, rows, contrib)

    grad_w0 = np.array([dz.sum()])
    return grad_w, grad_V, grad_w0
