"""Tests for minibatch training, early stopping and refit"""
import io
import math

import numpy as np
import pytest

from kt_errors import ConfigError, EmptyTrainingSet, NonFiniteGradient, NonFiniteLoss, UnlabeledToken
from fm_model.model import DeepFM
from fm_model.params import ModelConfig
from fm_training.metrics import acc_f1, auc
from fm_training.trainer import DEFAULT_PROTOCOL, TRAIN_PRESETS, TrainConfig, refit, train
from slam_data.encoder import InstanceBatch, SparseInstance, encode_dataset
from slam_data.schema import CategorySchema, FeatureSet
from slam_data.slam_reader import parse_dataset
from slam_data.synth import gen_fm, gen_rasch
from slam_data.vocab import Vocab, fit_vocab


def separable(n: int = 64) -> InstanceBatch:
    """Two entities; entity 1 always gives a mistake, entity 2 never does"""
    instances = [SparseInstance([(1 + i % 2, 1.0)], label=1 - i % 2, token_id=f"s{i}") for i in range(n)]
    return InstanceBatch.from_instances(instances, 1)


def separable_vocab() -> Vocab:
    return Vocab(FeatureSet.IRT, [("token", "a"), ("token", "b")])


def fm_data(n_instances: int, seed: int):
    world, instances = gen_fm(n_users=20, n_items=15, d=2, n_instances=n_instances, seed=seed)
    return world.vocab, InstanceBatch.from_instances(instances, 2)


def fm_split(n_train: int, n_val: int, seed: int):
    vocab, data = fm_data(n_train + n_val, seed)
    return vocab, data.subset(np.arange(n_train)), data.subset(np.arange(n_train, n_train + n_val))


def rasch_data(users: int, items: int, per_user: int, seed: int):
    _, text = gen_rasch(users, items, per_user, seed)
    exercises = parse_dataset(io.StringIO(text))
    schema = CategorySchema.for_feature_set(FeatureSet.IRT)
    vocab = fit_vocab(exercises, schema)
    return vocab, InstanceBatch.from_instances(encode_dataset(exercises, vocab, schema, strict=True), schema.n_categories)


class TestTrain:

    def test_separable_data(self):
        data = separable()
        model = DeepFM.build(ModelConfig(d=0, deep_enabled=False), separable_vocab())
        model, report = train(model, data, None, TrainConfig(learning_rate=0.1, batch_size=16, epochs=50))
        assert all(b < a for a, b in zip(report.train_nll[:5], report.train_nll[1:6]))
        acc, _ = acc_f1(model.predict_proba(data), data.labels)
        assert acc == 1.0

    def test_first_epochs_decrease_loss_at_default_rate(self):
        vocab, data = rasch_data(200, 100, 50, seed=0)
        model = DeepFM.build(ModelConfig(d=0, deep_enabled=False), vocab)
        config = TrainConfig(epochs=5)
        assert (config.learning_rate, config.batch_size) == (1e-3, 1024)
        _, report = train(model, data, None, config)
        nll = [report.initial_train_nll] + report.train_nll
        assert all(b < a for a, b in zip(nll, nll[1:]))

    def test_zero_epochs(self):
        model = DeepFM.build(ModelConfig(d=0, deep_enabled=False), separable_vocab())
        before = model.snapshot()
        same, report = train(model, separable(), None, TrainConfig(epochs=0))
        assert same is model
        assert report.epochs_run == 0
        assert report.val_metrics == []
        for name, array in model.named_arrays().items():
            np.testing.assert_array_equal(array, before[name])

    def test_deterministic(self):
        vocab, data = fm_data(500, seed=2)
        config = ModelConfig(d=3, hidden_widths=(4,), dropout=0.2)
        runs = []
        for _ in range(2):
            model = DeepFM.build(config, vocab)
            model, report = train(model, data, None, TrainConfig(batch_size=64, epochs=3, shuffle_seed=9))
            runs.append((model.snapshot(), report.to_dict()))
        assert runs[0][1] == runs[1][1]
        for name in runs[0][0]:
            np.testing.assert_array_equal(runs[0][0][name], runs[1][0][name])

    def test_update_count_keeps_ragged_batch(self):
        model = DeepFM.build(ModelConfig(d=0, deep_enabled=False), separable_vocab())
        _, report = train(model, separable(50), None, TrainConfig(batch_size=16, epochs=3))
        assert report.updates == 3 * math.ceil(50 / 16)

    def test_ragged_batch_gradient_is_a_mean(self):
        # one epoch with a single batch of 5 equals one Adam step on the mean gradient
        data = separable(5)
        model = DeepFM.build(ModelConfig(d=0, deep_enabled=False), separable_vocab())
        reference = model.copy()
        train(model, data, None, TrainConfig(batch_size=16, epochs=1))
        _, grads = reference.loss_and_grads(data, scale=1.0 / 5)
        g = grads["fm.w"]
        expected = -1e-3 * g / (np.abs(g) + 1e-8)
        np.testing.assert_allclose(model.fm.w, expected, rtol=1e-10)

    def test_progress_lines(self):
        vocab, data, val = fm_split(400, 200, seed=3)
        model = DeepFM.build(ModelConfig(d=2, deep_enabled=False), vocab)
        progress = io.StringIO()
        train(model, data, val, TrainConfig(epochs=2), progress)
        lines = progress.getvalue().splitlines()
        assert len(lines) == 2
        keys = [pair.split("=")[0] for pair in lines[0].split()]
        assert keys == ["epoch", "train_nll", "val_auc", "val_nll"]
        assert lines[1].startswith("epoch=2 ")

    def test_empty_training_set(self):
        model = DeepFM.build(ModelConfig(d=0, deep_enabled=False), separable_vocab())
        empty = InstanceBatch.from_instances([], 1)
        with pytest.raises(EmptyTrainingSet):
            train(model, empty, None, TrainConfig(epochs=1))

    def test_unlabeled_training_set(self):
        model = DeepFM.build(ModelConfig(d=0, deep_enabled=False), separable_vocab())
        data = InstanceBatch.from_instances([SparseInstance([(1, 1.0)])], 1)
        with pytest.raises(UnlabeledToken):
            train(model, data, None, TrainConfig(epochs=1))

    def test_early_stopping_needs_validation(self):
        model = DeepFM.build(ModelConfig(d=0, deep_enabled=False), separable_vocab())
        with pytest.raises(ConfigError):
            train(model, separable(), None, TrainConfig(epochs=5, early_stopping=True))

    def test_non_finite_gradient_names_epoch_and_batch(self):
        model = DeepFM.build(ModelConfig(d=0, deep_enabled=False), separable_vocab())
        model.fm.w[:] = np.nan
        with pytest.raises(NonFiniteGradient) as e:
            train(model, separable(), None, TrainConfig(batch_size=16, epochs=3))
        assert (e.value.epoch, e.value.batch) == (1, 0)
        assert e.value.module == "model_core"
        assert "epoch 1, batch 0" in str(e.value)

    def test_non_finite_loss_names_epoch_and_batch(self, monkeypatch):
        model = DeepFM.build(ModelConfig(d=0, deep_enabled=False), separable_vocab())
        zeros = {name: np.zeros_like(array) for name, array in model.named_arrays().items()}
        monkeypatch.setattr(model, "loss_and_grads", lambda batch, scale=1.0, rng=None: (math.inf, zeros))
        with pytest.raises(NonFiniteLoss) as e:
            train(model, separable(), None, TrainConfig(batch_size=16, epochs=3))
        assert (e.value.epoch, e.value.batch) == (1, 0)
        assert e.value.module == "trainer"


class TestEarlyStopping:

    def test_restores_best_epoch(self):
        vocab, data, val = fm_split(300, 300, seed=5)
        model = DeepFM.build(ModelConfig(d=4, hidden_widths=(16,)), vocab)
        config = TrainConfig(learning_rate=0.05, batch_size=32, epochs=40, early_stopping=True, patience=3)
        model, report = train(model, data, val, config)
        observed = [m["auc"] for m in report.val_metrics]
        assert report.best_epoch == int(np.argmax(observed)) + 1
        assert auc(model.predict_proba(val), val.labels) == max(observed)
        if report.epochs_run < config.epochs:
            assert report.epochs_run - report.best_epoch == config.patience
            assert report.stopping_reason.startswith("early stopping")

    def test_on_best_called_for_each_improvement(self):
        vocab, data, val = fm_split(300, 200, seed=7)
        seen = []
        model = DeepFM.build(ModelConfig(d=2, deep_enabled=False), vocab)
        _, report = train(model, data, val, TrainConfig(epochs=4), on_best=lambda m, epoch: seen.append(epoch))
        assert seen[0] == 1
        assert seen[-1] == report.best_epoch
        assert seen == sorted(set(seen))

    def test_nll_metric(self):
        vocab, data, val = fm_split(300, 200, seed=9)
        model = DeepFM.build(ModelConfig(d=2, deep_enabled=False), vocab)
        config = TrainConfig(learning_rate=0.05, epochs=10, early_stopping=True, patience=2,
                             early_stopping_metric="nll")
        model, report = train(model, data, val, config)
        observed = [m["nll"] for m in report.val_metrics]
        assert report.best_epoch == int(np.argmin(observed)) + 1


class TestRefit:

    def test_best_epoch_one_gives_one_epoch(self):
        vocab, data = fm_data(300, seed=11)
        config = TrainConfig(batch_size=100, epochs=30, early_stopping=True)
        progress = io.StringIO()
        refit(ModelConfig(d=2, deep_enabled=False), vocab, data, config, best_epoch=1, progress=progress)
        assert len(progress.getvalue().splitlines()) == 1
        assert progress.getvalue().startswith("epoch=1 ")

    def test_deterministic(self):
        vocab, data = fm_data(300, seed=12)
        config = TrainConfig(epochs=3)
        first = refit(ModelConfig(d=2, deep_enabled=False), vocab, data, config, best_epoch=2)
        second = refit(ModelConfig(d=2, deep_enabled=False), vocab, data, config, best_epoch=2)
        np.testing.assert_array_equal(first.fm.V, second.fm.V)

    def test_union_changes_parameters(self):
        vocab, data, val = fm_split(300, 300, seed=13)
        config = TrainConfig(epochs=3)
        model_config = ModelConfig(d=2, deep_enabled=False)
        train_only = refit(model_config, vocab, data, config, best_epoch=2)
        union = refit(model_config, vocab, InstanceBatch.concat([data, val]), config, best_epoch=2)
        assert not np.allclose(train_only.fm.w, union.fm.w)


class TestConfig:

    @pytest.mark.parametrize("kwargs", [
        {"learning_rate": 0.0},
        {"batch_size": 0},
        {"early_stopping": True, "patience": 0},
        {"early_stopping_metric": "f1"},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs)

    def test_presets(self):
        assert TRAIN_PRESETS["vanilla-fm"]["epochs"] == 500
        assert TRAIN_PRESETS["deepfm-es"]["early_stopping"]
        assert TRAIN_PRESETS["deepfm-final"]["epochs"] == 50
        assert DEFAULT_PROTOCOL["deepfm"] == "deepfm-es"
        assert TrainConfig(**TRAIN_PRESETS["deepfm-es"]).patience == 5
