"""
DeepFM composition p(x) = psi(y_FM + y_DNN)
"""
import logging
from typing import Dict, Optional, Tuple

import numpy as np

from kt_errors import DimensionMismatch, NonFiniteGradient
from fm_model.deep import deep_backward, deep_forward
from fm_model.fm import check_entities, fm_backward_batch, fm_forward_batch
from fm_model.links import clamp, log_loss
from fm_model.params import DeepParams, FmParams, ModelConfig, init_params
from slam_data.encoder import InstanceBatch, SparseInstance

logger = logging.getLogger(__name__)


class DeepFM:
    """FM component plus an optional deep component sharing the FM embeddings"""

    def __init__(self, config: ModelConfig, fm: FmParams, deep: Optional[DeepParams] = None):
        self.config = config
        self.fm = fm
        self.deep = deep
        if config.deep_enabled and deep is None:
            raise DimensionMismatch("deep component enabled but no deep parameters given")

    @classmethod
    def build(cls, config: ModelConfig, vocab, seed: Optional[int] = None) -> "DeepFM":
        fm, deep = init_params(config, vocab, seed)
        logger.info(f"Built model: N={fm.N}, d={config.d}, deep={config.deep_enabled}, link={config.link.value}")
        return cls(config, fm, deep)

    def named_arrays(self) -> Dict[str, np.ndarray]:
        """Live parameter arrays by name; the optimizer updates them in place"""
        arrays = {"fm.w": self.fm.w, "fm.V": self.fm.V}
        if self.config.global_bias:
            arrays["fm.w0"] = self.fm.w0
        if self.deep is not None:
            for layer, (W, b) in enumerate(zip(self.deep.weights, self.deep.biases)):
                arrays[f"deep.W{layer}"] = W
                arrays[f"deep.b{layer}"] = b
        return arrays

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: array.copy() for name, array in self.named_arrays().items()}

    def restore(self, snapshot: Dict[str, np.ndarray]):
        for name, array in self.named_arrays().items():
            array[...] = snapshot[name]

    def copy(self) -> "DeepFM":
        return DeepFM(self.config, self.fm.copy(), self.deep.copy() if self.deep is not None else None)

    def _forward(self, batch: InstanceBatch, rng: Optional[np.random.Generator] = None):
        check_entities(batch.entities, self.fm.N)
        rows = batch.entities - 1
        y_fm, summed = fm_forward_batch(self.fm, rows, batch.values)
        if self.deep is None:
            return y_fm, (rows, summed, None)

        a0 = (batch.values[:, :, None] * self.fm.V[rows]).reshape(len(batch), -1)
        y_dnn, cache = deep_forward(self.deep, a0, self.config.final_activation, self.config.dropout, rng)
        return y_fm + y_dnn, (rows, summed, cache)

    def logits(self, batch: InstanceBatch) -> np.ndarray:
        z, _ = self._forward(batch)
        return z

    def predict_proba(self, batch: InstanceBatch) -> np.ndarray:
        """Clamped probability of a mistake for every instance"""
        return clamp(self.config.link(self.logits(batch)))

    def loss_and_grads(self, batch: InstanceBatch, scale: float = 1.0,
                       rng: Optional[np.random.Generator] = None) -> Tuple[float, Dict[str, np.ndarray]]:
        """
        Summed log loss of the batch and gradients of scale * (summed loss)

        The embeddings receive gradient from the FM pairwise term and from the deep
        first layer.
        """
        z, (rows, summed, cache) = self._forward(batch, rng)
        labels = batch.labels.astype(np.float64)
        loss = float(np.sum(log_loss(self.config.link(z), labels)))
        dz = scale * self.config.link.loss_grad(z, labels)

        grad_w, grad_V, grad_w0 = fm_backward_batch(self.fm, rows, batch.values, summed, dz)
        grads = {"fm.w": grad_w, "fm.V": grad_V}
        if self.config.global_bias:
            grads["fm.w0"] = grad_w0

        if self.deep is not None:
            grad_weights, grad_biases, d_a0 = deep_backward(self.deep, cache, dz, self.config.final_activation)
            d_a0 = d_a0.reshape(len(batch), batch.n_slots, self.config.d)
            np.add.at(grad_V, rows, batch.values[:, :, None] * d_a0)
            for layer, (gW, gb) in enumerate(zip(grad_weights, grad_biases)):
                grads[f"deep.W{layer}"] = gW
                grads[f"deep.b{layer}"] = gb

        for name, grad in grads.items():
            if not np.all(np.isfinite(grad)):
                raise NonFiniteGradient(f"non-finite gradient in '{name}'")
        return loss, grads


def _single(x: SparseInstance, label: Optional[int] = None) -> InstanceBatch:
    if label is not None:
        x = SparseInstance(x.active, label, x.token_id)
    return InstanceBatch.from_instances([x], len(x.active))


def predict(model: DeepFM, x: SparseInstance) -> float:
    """psi(y_FM + y_DNN) for one instance, clamped to [eps, 1 - eps]"""
    return float(model.predict_proba(_single(x))[0])


def instance_loss(model: DeepFM, x: SparseInstance, label: int) -> float:
    return float(log_loss(model.config.link(model.logits(_single(x))), np.array([label]))[0])


def backward(model: DeepFM, x: SparseInstance, label: int) -> Dict[str, np.ndarray]:
    """Analytic gradients of the per-instance log loss for every parameter group"""
    _, grads = model.loss_and_grads(_single(x, label))
    return grads
