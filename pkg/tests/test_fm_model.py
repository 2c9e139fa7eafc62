"""Tests for the FM and deep components, links, composition and initialization"""
import numpy as np
import pytest

from kt_errors import ConfigError, DimensionMismatch, IndexOutOfRange
from fm_model.deep import deep_forward
from fm_model.fm import fm_forward
from fm_model.links import PROB_EPS, LinkFunction, log_loss
from fm_model.model import DeepFM, backward, instance_loss, predict
from fm_model.params import DeepParams, FmParams, ModelConfig, init_params
from slam_data.encoder import SparseInstance


class _Sizes:
    """Stand-in vocab exposing only the sizes init_params reads"""

    def __init__(self, N: int, n_categories: int):
        self.N = N
        self.n_categories = n_categories


def naive_fm(params: FmParams, x: SparseInstance) -> float:
    entities, values = x.to_arrays()
    total = float(params.w0[0])
    for k, xk in zip(entities, values):
        total += params.w[k - 1] * xk
    for a in range(len(entities)):
        for b in range(a + 1, len(entities)):
            k, l = entities[a], entities[b]
            total += values[a] * values[b] * float(np.dot(params.V[k - 1], params.V[l - 1]))
    return total


def random_instance(rng, N: int, max_active: int) -> SparseInstance:
    n_active = int(rng.integers(0, max_active + 1))
    entities = rng.choice(N, size=n_active, replace=False) + 1
    values = np.where(rng.random(n_active) < 0.3, rng.normal(size=n_active), 1.0)
    return SparseInstance([(int(e), float(v)) for e, v in zip(entities, values)])


class TestFmForward:

    def test_factored_identity_matches_double_loop(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            N = int(rng.integers(1, 31))
            d = int(rng.integers(0, 9))
            params = FmParams(rng.normal(size=N), rng.normal(size=(N, d)))
            x = random_instance(rng, N, min(N, 8))
            expected = naive_fm(params, x)
            got = fm_forward(params, x)
            assert abs(got - expected) <= 1e-10 * max(1.0, abs(expected))

    def test_no_active_entities(self):
        params = FmParams(np.ones(3), np.ones((3, 2)))
        assert fm_forward(params, SparseInstance([])) == 0.0

    def test_d0_is_sum_of_biases(self):
        params = FmParams(np.array([0.5, -1.0, 2.0, 0.25]), np.zeros((4, 0)))
        x = SparseInstance([(1, 1.0), (3, 1.0)])
        assert fm_forward(params, x) == 2.5

    def test_pairwise_hand_example(self):
        params = FmParams(np.zeros(3), np.array([[1.0], [2.0], [3.0]]))
        x = SparseInstance([(1, 1.0), (2, 1.0), (3, 1.0)])
        assert fm_forward(params, x) == pytest.approx(11.0)

    def test_index_out_of_range(self):
        params = FmParams(np.zeros(3), np.zeros((3, 1)))
        with pytest.raises(IndexOutOfRange):
            fm_forward(params, SparseInstance([(4, 1.0)]))
        with pytest.raises(IndexOutOfRange):
            fm_forward(params, SparseInstance([(0, 1.0)]))


class TestDeepForward:

    def test_zero_weights(self):
        params = DeepParams([np.zeros((4, 6)), np.zeros((1, 4))], [np.zeros(4), np.zeros(1)])
        y, _ = deep_forward(params, [np.ones(2), np.ones(2), np.ones(2)])
        assert y == 0.0

    def test_single_layer_hand_example(self):
        params = DeepParams([np.ones((1, 3))], [np.zeros(1)])
        y, cache = deep_forward(params, [np.array([1.0]), np.array([-2.0]), np.array([3.0])], "relu")
        assert y == 2.0
        assert cache[-1].pre_activation[0, 0] == 2.0

    def test_relu_output_is_non_negative(self):
        rng = np.random.default_rng(1)
        params = DeepParams([rng.normal(size=(5, 4)), rng.normal(size=(1, 5))], [rng.normal(size=5), rng.normal(size=1)])
        batch = rng.normal(size=(200, 4))
        relu_out, _ = deep_forward(params, batch, "relu")
        linear_out, _ = deep_forward(params, batch, "linear")
        assert np.all(relu_out >= 0.0)
        assert np.any(linear_out < 0.0)
        np.testing.assert_allclose(relu_out, np.maximum(linear_out, 0.0))

    def test_width_mismatch(self):
        params = DeepParams([np.ones((1, 3))], [np.zeros(1)])
        with pytest.raises(DimensionMismatch):
            deep_forward(params, [np.ones(2), np.ones(2)])

    def test_dropout_only_with_rng(self):
        rng = np.random.default_rng(2)
        params = DeepParams([rng.normal(size=(8, 4)), rng.normal(size=(1, 8))], [np.zeros(8), np.zeros(1)])
        batch = rng.normal(size=(10, 4))
        plain, _ = deep_forward(params, batch, "linear")
        no_rng, _ = deep_forward(params, batch, "linear", dropout=0.5)
        dropped, cache = deep_forward(params, batch, "linear", dropout=0.5, rng=np.random.default_rng(3))
        np.testing.assert_array_equal(plain, no_rng)
        assert cache[0].mask is not None
        assert set(np.unique(cache[0].mask)) <= {0.0, 2.0}
        assert not np.allclose(plain, dropped)


class TestLinks:

    @pytest.mark.parametrize("link", list(LinkFunction))
    def test_zero_maps_to_half(self, link):
        assert link(0.0) == pytest.approx(0.5)

    @pytest.mark.parametrize("link", list(LinkFunction))
    def test_monotone_and_symmetric(self, link):
        z = np.linspace(-5, 5, 401)
        p = link(z)
        assert np.all(np.diff(p) > 0)
        np.testing.assert_allclose(link(-z), 1.0 - p, atol=1e-15)

    def test_probit_gradient_is_finite_far_in_the_tail(self):
        z = np.array([-40.0, -10.0, 10.0, 40.0])
        for y in (0.0, 1.0):
            grad = LinkFunction.PROBIT.loss_grad(z, np.full(4, y))
            assert np.all(np.isfinite(grad))
        # -d/dz log Phi(z) ~ -|z| for very negative z
        assert LinkFunction.PROBIT.loss_grad(np.array([-40.0]), np.array([1.0]))[0] == pytest.approx(-40.0, rel=1e-2)

    def test_log_loss_is_clamped(self):
        loss = log_loss(np.array([0.0, 1.0]), np.array([1.0, 0.0]))
        np.testing.assert_allclose(loss, -np.log(PROB_EPS), rtol=1e-4)


def _irt_model(w) -> DeepFM:
    config = ModelConfig(d=0, deep_enabled=False)
    return DeepFM(config, FmParams(np.asarray(w, dtype=np.float64), np.zeros((len(w), 0))))


class TestPredict:

    def test_zero_score_gives_half(self):
        for link in LinkFunction:
            model = DeepFM(ModelConfig(d=0, deep_enabled=False, link=link), FmParams(np.zeros(4), np.zeros((4, 0))))
            assert predict(model, SparseInstance([(1, 1.0), (3, 1.0)])) == pytest.approx(0.5)

    def test_irt_reduction_example(self):
        model = _irt_model([1.2, 0.0, 0.0, -0.2])
        assert predict(model, SparseInstance([(1, 1.0), (4, 1.0)])) == pytest.approx(0.7310586, abs=1e-7)

    def test_d0_is_logistic_regression(self):
        rng = np.random.default_rng(4)
        w = rng.normal(size=10)
        model = _irt_model(w)
        for _ in range(50):
            i, j = rng.choice(5, size=2, replace=False)
            x = SparseInstance([(int(i) + 1, 1.0), (int(j) + 6, 1.0)])
            expected = 1.0 / (1.0 + np.exp(-(w[i] + w[j + 5])))
            assert predict(model, x) == pytest.approx(expected, rel=1e-12)

    def test_permutation_invariance(self):
        config = ModelConfig(d=3, deep_enabled=True, hidden_widths=(4,), final_activation="linear")
        model = DeepFM.build(config, _Sizes(N=9, n_categories=3), seed=5)
        model.fm.w[:] = np.random.default_rng(6).normal(size=9)
        forward = SparseInstance([(1, 1.0), (4, 1.0), (7, 0.5)])
        shuffled = SparseInstance([(7, 0.5), (1, 1.0), (4, 1.0)])
        assert predict(model, forward) == predict(model, shuffled)

    def test_zero_model_gradient(self):
        model = _irt_model([0.0] * 4)
        grads = backward(model, SparseInstance([(2, 1.0), (3, 1.0)]), label=1)
        np.testing.assert_allclose(grads["fm.w"], [0.0, -0.5, -0.5, 0.0])

    def test_inactive_entities_get_no_fm_gradient(self):
        config = ModelConfig(d=2, deep_enabled=False)
        model = DeepFM.build(config, _Sizes(N=6, n_categories=2), seed=7)
        grads = backward(model, SparseInstance([(1, 1.0), (5, 1.0)]), label=0)
        inactive = [1, 2, 3, 5]
        assert np.all(grads["fm.w"][inactive] == 0.0)
        assert np.all(grads["fm.V"][inactive] == 0.0)

    def test_instance_loss(self):
        model = _irt_model([0.0] * 4)
        assert instance_loss(model, SparseInstance([(1, 1.0), (3, 1.0)]), 1) == pytest.approx(np.log(2.0))


class TestInitParams:

    def test_deterministic(self):
        config = ModelConfig(d=4, hidden_widths=(8, 8), seed=11)
        first_fm, first_deep = init_params(config, _Sizes(20, 5))
        second_fm, second_deep = init_params(config, _Sizes(20, 5))
        np.testing.assert_array_equal(first_fm.V, second_fm.V)
        for a, b in zip(first_deep.weights, second_deep.weights):
            np.testing.assert_array_equal(a, b)

    def test_d0_allocates_only_biases(self):
        fm, deep = init_params(ModelConfig(d=0, deep_enabled=False), _Sizes(7, 2))
        assert fm.V.shape == (7, 0)
        assert deep is None
        assert np.all(fm.w == 0.0)

    def test_embedding_statistics(self):
        fm, _ = init_params(ModelConfig(d=10, deep_enabled=False, seed=3), _Sizes(10_000, 2))
        values = fm.V.ravel()
        assert abs(values.mean()) < 4 * 0.01 / np.sqrt(values.size)
        assert values.std() == pytest.approx(0.01, rel=0.05)

    def test_deep_layer_shapes(self):
        _, deep = init_params(ModelConfig(d=3, hidden_widths=(5, 4)), _Sizes(12, 4))
        assert [W.shape for W in deep.weights] == [(5, 12), (4, 5), (1, 4)]
        assert all(np.all(b == 0.0) for b in deep.biases)


class TestModelConfig:

    def test_deep_needs_embeddings(self):
        with pytest.raises(ConfigError):
            ModelConfig(d=0, deep_enabled=True)

    def test_unknown_final_activation(self):
        with pytest.raises(ConfigError):
            ModelConfig(final_activation="tanh")

    def test_dict_round_trip(self):
        config = ModelConfig(d=5, hidden_widths=(3,), link="probit", dropout=0.25, global_bias=True)
        assert ModelConfig.from_dict(config.to_dict()) == config
