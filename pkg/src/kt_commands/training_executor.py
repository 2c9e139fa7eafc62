"""
Training Executor
Runs the `train` subcommand: load, encode, train, optional refit, write artifacts
"""
import json
import logging
import os
from typing import Any, Dict, List, Optional, Tuple

from kt_errors import SlamFmError, UsageError
from fm_model.checkpoint import Checkpoint, save_checkpoint
from fm_model.model import DeepFM
from fm_training.trainer import refit, train
from kt_commands.manifest import write_manifest
from kt_commands.results import failure, success
from kt_commands.run_config import RunConfig
from slam_data.encoder import InstanceBatch, NormalizationStats, encode_dataset, normalize_continuous
from slam_data.records import LabeledExercise
from slam_data.schema import CategorySchema
from slam_data.slam_reader import load_dataset, split_by_fraction
from slam_data.vocab import Vocab, fit_vocab


def encode_batch(exercises: List[LabeledExercise], vocab: Vocab, schema: CategorySchema,
                 stats: Optional[NormalizationStats] = None,
                 strict: bool = False) -> Tuple[InstanceBatch, NormalizationStats]:
    """Encode, normalize (fitting stats when none are given) and stack exercises"""
    instances = encode_dataset(exercises, vocab, schema, strict=strict)
    instances, stats = normalize_continuous(instances, vocab, schema, stats=stats)
    return InstanceBatch.from_instances(instances, schema.n_categories), stats


class TrainingExecutor:
    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def execute(self, run_config: RunConfig) -> Dict[str, Any]:
        self.logger.info(f"Running train with model preset '{run_config.model_preset}' "
                         f"and protocol '{run_config.protocol}'")
        try:
            return self._train(run_config)
        except (SlamFmError, OSError) as e:
            return failure(self.logger, e)

    def _load_splits(self, run_config: RunConfig) -> Tuple[List[LabeledExercise], List[LabeledExercise]]:
        if "train" not in run_config.inputs:
            raise UsageError("train needs --train")
        train_data = load_dataset(run_config.inputs["train"], strict_labels=True, lowercase=run_config.lowercase)

        if "dev" in run_config.inputs:
            dev_data = load_dataset(run_config.inputs["dev"], run_config.inputs.get("labels"),
                                    strict_labels=True, lowercase=run_config.lowercase)
        elif run_config.dev_fraction is not None:
            train_data, dev_data = split_by_fraction(train_data, 1.0 - run_config.dev_fraction, run_config.seed)
        else:
            dev_data = []
        return train_data, dev_data

    def _train(self, run_config: RunConfig) -> Dict[str, Any]:
        out = run_config.out
        os.makedirs(out, exist_ok=True)
        paths = {name: os.path.join(out, name)
                 for name in ("checkpoint.json", "train_report.json", "progress.log")}

        schema = CategorySchema.for_feature_set(run_config.feature_set)
        train_data, dev_data = self._load_splits(run_config)
        vocab = fit_vocab(train_data, schema)
        train_batch, stats = encode_batch(train_data, vocab, schema, strict=True)
        val_batch = encode_batch(dev_data, vocab, schema, stats, strict=True)[0] if dev_data else None
        self.logger.info(f"Encoded {len(train_batch)} training and "
                         f"{len(val_batch) if val_batch is not None else 0} validation instances")

        def checkpoint_best(model: DeepFM, epoch: int):
            save_checkpoint(paths["checkpoint.json"], Checkpoint(model, vocab, stats))

        model = DeepFM.build(run_config.model, vocab)
        with open(paths["progress.log"], "w", encoding="utf-8") as progress:
            model, report = train(model, train_batch, val_batch, run_config.train, progress, checkpoint_best)

            refit_mode, refit_epochs = "none", 0
            if run_config.refit != "none" and run_config.train.early_stopping and report.best_epoch:
                refit_mode, refit_epochs = run_config.refit, report.best_epoch
                if refit_mode == "union":
                    refit_data = InstanceBatch.concat([train_batch, val_batch])
                else:
                    refit_data = val_batch
                progress.write(f"phase=refit mode={refit_mode} epochs={refit_epochs}\n")
                model = refit(run_config.model, vocab, refit_data, run_config.train, refit_epochs, progress)
            elif run_config.refit != "none":
                self.logger.info("No early stopping in this protocol, skipping refit")

        save_checkpoint(paths["checkpoint.json"], Checkpoint(model, vocab, stats))

        report_doc = report.to_dict()
        report_doc.update({
            "epochs_run": report.epochs_run,
            "n_train": len(train_batch),
            "n_validation": len(val_batch) if val_batch is not None else 0,
            "refit": refit_mode,
            "refit_epochs": refit_epochs,
        })
        with open(paths["train_report.json"], "w", encoding="utf-8") as f:
            f.write(json.dumps(report_doc, sort_keys=True, indent=1) + "\n")

        write_manifest(os.path.join(out, "manifest.json"), run_config, paths)
        self.logger.info(f"Training artifacts written to {out}")
        return success(out=out, best_epoch=report.best_epoch, epochs_run=report.epochs_run,
                       stopping_reason=report.stopping_reason)
