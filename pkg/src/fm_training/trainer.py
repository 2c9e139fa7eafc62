"""
Minibatch Adam training on log loss, early stopping and refit
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, List, Optional, TextIO, Tuple

import numpy as np

from kt_errors import (
    ConfigError, EmptyTrainingSet, NonFiniteGradient, NonFiniteLoss, SingleClass, UnlabeledToken,
)
from fm_model.model import DeepFM
from fm_model.params import ModelConfig
from fm_training.adam import AdamState, adam_step
from fm_training.metrics import auc, nll
from slam_data.encoder import InstanceBatch

logger = logging.getLogger(__name__)

STOPPING_METRICS = ("auc", "nll")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 1024
    epochs: int = 50
    early_stopping: bool = False
    patience: int = 5
    early_stopping_metric: str = "auc"
    shuffle_seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    workers: int = 1
    deterministic: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be > 0, got {self.learning_rate}", module="trainer")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}", module="trainer")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}", module="trainer")
        if self.early_stopping and self.patience < 1:
            raise ConfigError("patience must be >= 1 when early stopping is on", module="trainer")
        if self.early_stopping_metric not in STOPPING_METRICS:
            raise ConfigError(f"early stopping metric must be one of {STOPPING_METRICS}", module="trainer")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}", module="trainer")

    def to_dict(self):
        return asdict(self)


# Training protocols: vanilla FM for 500 epochs, DeepFM for 100 epochs with early
# stopping, and the final DeepFM run for a fixed 50 epochs
TRAIN_PRESETS: Dict[str, Dict] = {
    "vanilla-fm": {"epochs": 500, "early_stopping": False},
    "deepfm-es": {"epochs": 100, "early_stopping": True, "patience": 5, "early_stopping_metric": "auc"},
    "deepfm-final": {"epochs": 50, "early_stopping": False},
}

DEFAULT_PROTOCOL = {
    "irt": "vanilla-fm",
    "lr-baseline": "vanilla-fm",
    "vanilla-fm": "vanilla-fm",
    "deepfm": "deepfm-es",
    "deepfm-star": "deepfm-es",
}


@dataclass
class TrainReport:
    train_nll: List[float] = field(default_factory=list)
    val_metrics: List[Dict[str, float]] = field(default_factory=list)
    best_epoch: Optional[int] = None
    stopping_reason: str = ""
    initial_train_nll: Optional[float] = None
    updates: int = 0

    @property
    def epochs_run(self) -> int:
        return len(self.train_nll)

    def to_dict(self):
        return asdict(self)


def _mean_nll(model: DeepFM, data: InstanceBatch) -> float:
    return nll(model.predict_proba(data), data.labels)


def _validation_metrics(model: DeepFM, val: InstanceBatch) -> Dict[str, float]:
    scores = model.predict_proba(val)
    metrics = {"nll": nll(scores, val.labels)}
    try:
        metrics["auc"] = auc(scores, val.labels)
    except SingleClass:
        pass
    return metrics


def _batch_gradients(model: DeepFM, batch: InstanceBatch, config: TrainConfig,
                     epoch: int, batch_no: int) -> Tuple[float, Dict[str, np.ndarray]]:
    """Mean gradient over the batch, optionally fanned out over worker threads"""
    scale = 1.0 / len(batch)

    def dropout_rng(chunk: int):
        if model.config.dropout <= 0.0:
            return None
        return np.random.default_rng([config.shuffle_seed, epoch, batch_no, chunk])

    workers = 1 if config.deterministic else config.workers
    if workers == 1 or len(batch) < 2 * workers:
        return model.loss_and_grads(batch, scale, dropout_rng(0))

    # unordered fan-in: floating point sums may differ between runs
    chunks = np.array_split(np.arange(len(batch)), workers)
    total_loss, total = 0.0, None
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(model.loss_and_grads, batch.subset(chunk), scale, dropout_rng(i))
            for i, chunk in enumerate(chunks)
        ]
        for future in as_completed(futures):
            loss, grads = future.result()
            total_loss += loss
            if total is None:
                total = grads
            else:
                for name, grad in grads.items():
                    total[name] += grad
    return total_loss, total


def train(model: DeepFM, data: InstanceBatch, val: Optional[InstanceBatch], config: TrainConfig,
          progress: Optional[TextIO] = None,
          on_best: Optional[Callable[[DeepFM, int], None]] = None) -> Tuple[DeepFM, TrainReport]:
    """
    Train with minibatch Adam on the mean log loss

    Instances are reshuffled every epoch with seed shuffle_seed + epoch (epoch counted from 0).
    The last ragged minibatch is kept and averaged over its own size. With early stopping,
    training halts after `patience` epochs without improvement of the validation metric and
    the best-epoch parameters are restored.
    """
    report = TrainReport()
    if config.epochs == 0:
        report.stopping_reason = "no epochs requested"
        return model, report
    if len(data) == 0:
        raise EmptyTrainingSet("no training instances")
    if not data.labeled:
        raise UnlabeledToken("training instances must all be labeled")

    has_val = val is not None and len(val) > 0 and val.labeled
    metric = config.early_stopping_metric
    if has_val and metric == "auc" and len(np.unique(val.labels)) < 2:
        logger.warning("Validation set has a single class, tracking NLL instead of AUC")
        metric = "nll"
    if config.early_stopping and not has_val:
        raise ConfigError("early stopping needs a labeled validation set", module="trainer")

    params = model.named_arrays()
    state = AdamState.zeros_like(params)
    report.initial_train_nll = _mean_nll(model, data)

    n = len(data)
    best_value, best_snapshot, bad_epochs = None, None, 0
    report.stopping_reason = f"completed {config.epochs} epochs"

    for epoch in range(config.epochs):
        order = np.random.default_rng(config.shuffle_seed + epoch).permutation(n)
        for batch_no, start in enumerate(range(0, n, config.batch_size)):
            batch = data.subset(order[start:start + config.batch_size])
            try:
                loss, grads = _batch_gradients(model, batch, config, epoch, batch_no)
            except NonFiniteGradient as e:
                raise NonFiniteGradient(str(e), epoch + 1, batch_no) from e
            if not math.isfinite(loss):
                raise NonFiniteLoss(epoch + 1, batch_no, loss)
            adam_step(state, params, grads, config)
            report.updates += 1

        train_nll = _mean_nll(model, data)
        if not math.isfinite(train_nll):
            raise NonFiniteLoss(epoch + 1, -1, train_nll)
        report.train_nll.append(train_nll)

        line = f"epoch={epoch + 1} train_nll={train_nll:.6f}"
        if has_val:
            metrics = _validation_metrics(model, val)
            report.val_metrics.append(metrics)
            if "auc" in metrics:
                line += f" val_auc={metrics['auc']:.6f}"
            line += f" val_nll={metrics['nll']:.6f}"

            value = metrics[metric]
            improved = best_value is None or (value > best_value if metric == "auc" else value < best_value)
            if improved:
                best_value, bad_epochs = value, 0
                report.best_epoch = epoch + 1
                if config.early_stopping:
                    best_snapshot = model.snapshot()
                if on_best is not None:
                    on_best(model, epoch + 1)
            else:
                bad_epochs += 1

        logger.info(line)
        if progress is not None:
            progress.write(line + "\n")
            progress.flush()

        if config.early_stopping and bad_epochs >= config.patience:
            report.stopping_reason = f"early stopping: no {metric} improvement for {bad_epochs} epochs"
            break

    if best_snapshot is not None:
        model.restore(best_snapshot)
    if not has_val:
        report.best_epoch = report.epochs_run

    logger.info(f"Training finished after {report.epochs_run} epochs, best epoch {report.best_epoch} "
                f"({report.stopping_reason})")
    return model, report


def refit(model_config: ModelConfig, vocab, data: InstanceBatch, config: TrainConfig, best_epoch: int,
          progress: Optional[TextIO] = None) -> DeepFM:
    """Fresh training on `data` for best_epoch epochs, without early stopping"""
    logger.info(f"Refitting on {len(data)} instances for {best_epoch} epochs")
    model = DeepFM.build(model_config, vocab)
    model, _ = train(model, data, None, replace(config, epochs=best_epoch, early_stopping=False), progress)
    return model
