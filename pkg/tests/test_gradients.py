"""Analytic gradients of the DeepFM log loss against central finite differences"""
import numpy as np
import pytest

from fm_model.links import LinkFunction
from fm_model.model import DeepFM
from fm_model.params import ModelConfig
from slam_data.encoder import InstanceBatch, SparseInstance

STEP = 1e-5
N_MODELS = 50


class _Sizes:
    def __init__(self, N: int, n_categories: int):
        self.N = N
        self.n_categories = n_categories


def random_problem(rng, link: LinkFunction, final_activation: str):
    """Small model over three categories; the last category is continuous"""
    sizes = [int(rng.integers(1, 4)), int(rng.integers(1, 5)), 1]
    N = sum(sizes)
    d = int(rng.integers(1, 5))
    hidden = tuple(int(rng.integers(1, 9)) for _ in range(int(rng.integers(1, 3))))
    config = ModelConfig(d=d, deep_enabled=True, hidden_widths=hidden, final_activation=final_activation,
                         link=link, global_bias=bool(rng.integers(0, 2)))
    model = DeepFM.build(config, _Sizes(N, 3), seed=int(rng.integers(0, 2**31)))
    # move away from the tiny default initialization so every term contributes
    for array in model.named_arrays().values():
        array[...] = rng.normal(0.0, 0.3, size=array.shape)

    offsets = np.cumsum([0] + sizes)
    instances = []
    for _ in range(4):
        active = [(int(offsets[c] + rng.integers(0, sizes[c])) + 1, 1.0) for c in range(2)]
        active.append((N, float(rng.normal())))
        instances.append(SparseInstance(active, label=int(rng.integers(0, 2))))
    return model, InstanceBatch.from_instances(instances, 3)


def numeric_gradients(model: DeepFM, batch: InstanceBatch):
    numeric = {}
    for name, array in model.named_arrays().items():
        grad = np.zeros_like(array)
        flat, grad_flat = array.reshape(-1), grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + STEP
            plus, _ = model.loss_and_grads(batch)
            flat[i] = original - STEP
            minus, _ = model.loss_and_grads(batch)
            flat[i] = original
            grad_flat[i] = (plus - minus) / (2 * STEP)
        numeric[name] = grad
    return numeric


@pytest.mark.parametrize("final_activation", ["relu", "linear"])
@pytest.mark.parametrize("link", list(LinkFunction))
def test_analytic_gradients_match_finite_differences(link, final_activation):
    rng = np.random.default_rng([list(LinkFunction).index(link), ["relu", "linear"].index(final_activation)])
    for _ in range(N_MODELS):
        model, batch = random_problem(rng, link, final_activation)
        _, analytic = model.loss_and_grads(batch)
        numeric = numeric_gradients(model, batch)
        assert set(analytic) == set(numeric)
        for name in analytic:
            a, n = analytic[name], numeric[name]
            scale = np.maximum(np.abs(a) + np.abs(n), 1e-4)
            assert np.all(np.abs(a - n) <= 1e-4 * scale), name


def test_embeddings_receive_gradient_from_both_components():
    rng = np.random.default_rng(8)
    model, batch = random_problem(rng, LinkFunction.SIGMOID, "linear")
    _, with_deep = model.loss_and_grads(batch)
    fm_only = DeepFM(ModelConfig(d=model.config.d, deep_enabled=False, link=model.config.link,
                                 global_bias=model.config.global_bias), model.fm)
    _, without_deep = fm_only.loss_and_grads(batch)
    assert not np.allclose(with_deep["fm.V"], without_deep["fm.V"])


def test_scale_multiplies_gradients():
    rng = np.random.default_rng(9)
    model, batch = random_problem(rng, LinkFunction.PROBIT, "linear")
    loss, grads = model.loss_and_grads(batch)
    scaled_loss, scaled = model.loss_and_grads(batch, scale=0.25)
    assert scaled_loss == loss
    for name in grads:
        np.testing.assert_allclose(scaled[name], 0.25 * grads[name])
