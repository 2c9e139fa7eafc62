"""
Deep component: feedforward ReLU network over the concatenated slot embeddings
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from kt_errors import DimensionMismatch
from fm_model.params import DeepParams


@dataclass
class LayerCache:
    inputs: np.ndarray
    pre_activation: np.ndarray
    mask: Optional[np.ndarray] = None


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def deep_forward(params: DeepParams, embeddings: Union[np.ndarray, Sequence[np.ndarray]],
                 final_activation: str = "relu", dropout: float = 0.0,
                 rng: Optional[np.random.Generator] = None) -> Tuple[Union[float, np.ndarray], List[LayerCache]]:
    """
    Forward pass a^(l+1) = ReLU(W^(l) a^(l) + b^(l))

    Args:
        embeddings: either the C slot vectors of one instance (continuous slots already
            scaled by their value), or a (B, C*d) array of concatenated inputs
        final_activation: "relu" keeps ReLU on the output, "linear" drops it
        dropout: inverted dropout rate on hidden activations, applied only when rng is given

    Returns:
        y_DNN (float for a single instance, (B,) array for a batch) and the layer caches
    """
    single = not (isinstance(embeddings, np.ndarray) and embeddings.ndim == 2)
    if single:
        a = np.concatenate([np.ravel(v) for v in embeddings])[None, :] if len(embeddings) else np.zeros((1, 0))
    else:
        a = embeddings

    if a.shape[1] != params.input_width:
        raise DimensionMismatch(f"deep input has width {a.shape[1]}, expected {params.input_width}")

    cache: List[LayerCache] = []
    last = len(params.weights) - 1
    for layer, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ W.T + b
        if layer == last:
            cache.append(LayerCache(a, z))
            break
        h = relu(z)
        mask = None
        if dropout > 0.0 and rng is not None:
            mask = (rng.random(h.shape) >= dropout) / (1.0 - dropout)
            h = h * mask
        cache.append(LayerCache(a, z, mask))
        a = h

    z_out = cache[-1].pre_activation[:, 0]
    y = relu(z_out) if final_activation == "relu" else z_out
    if single:
        return float(y[0]), cache
    return y, cache


def deep_backward(params: DeepParams, cache: List[LayerCache], dy: np.ndarray,
                  final_activation: str = "relu") -> Tuple[List[np.ndarray], List[np.ndarray], np.ndarray]:
    """
    Backpropagate dL/dy_DNN through the network

    Returns:
        weight gradients, bias gradients and the gradient with respect to the input a^0
    """
    z_out = cache[-1].pre_activation
    delta = dy[:, None] * (z_out > 0.0 if final_activation == "relu" else 1.0)

    grad_weights: List[np.ndarray] = [None] * len(params.weights)
    grad_biases: List[np.ndarray] = [None] * len(params.biases)
    for layer in range(len(params.weights) - 1, -1, -1):
        entry = cache[layer]
        grad_weights[layer] = delta.T @ entry.inputs
        grad_biases[layer] = delta.sum(axis=0)
        d_inputs = delta @ params.weights[layer]
        if layer == 0:
            return grad_weights, grad_biases, d_inputs

        below = cache[layer - 1]
        delta = d_inputs * (below.pre_activation > 0.0)
        if below.mask is not None:
            delta = delta * below.mask
    raise DimensionMismatch("deep component has no layers")
