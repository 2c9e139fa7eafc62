"""
Scoring Executor
Runs the `evaluate` and `predict` subcommands against a saved checkpoint
"""
import logging
import os
from typing import Any, Dict

import numpy as np

from kt_errors import EmptyDataset, SchemaMismatch, SlamFmError, UsageError
from fm_model.checkpoint import Checkpoint, load_checkpoint
from fm_training.metrics import evaluate
from kt_commands.manifest import record_manifest, sidecar_path
from kt_commands.results import failure, success
from kt_commands.run_config import RunConfig
from kt_commands.training_executor import encode_batch
from slam_data.schema import CategorySchema
from slam_data.slam_reader import load_dataset
from slam_data.vocab import fit_vocab


class ScoringExecutor:
    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def execute(self, action: str, run_config: RunConfig) -> Dict[str, Any]:
        self.logger.info(f"Running scoring action: {action}")
        try:
            if action == "evaluate":
                return self._evaluate(run_config)
            elif action == "predict":
                return self._predict(run_config)
            else:
                raise UsageError(f"unknown scoring action '{action}'")
        except (SlamFmError, OSError) as e:
            return failure(self.logger, e)

    def _load_checkpoint(self, run_config: RunConfig) -> Checkpoint:
        for role in ("checkpoint", "data"):
            if role not in run_config.inputs:
                raise UsageError(f"{run_config.command} needs --{role}")

        checkpoint = load_checkpoint(run_config.inputs["checkpoint"])
        feature_set = checkpoint.vocab.feature_set
        if run_config.schema_requested is not None and run_config.schema_requested != feature_set:
            raise SchemaMismatch(f"checkpoint was trained with schema '{feature_set.value}', "
                                 f"not '{run_config.schema_requested.value}'")
        return checkpoint

    def _check_vocab(self, run_config: RunConfig, checkpoint: Checkpoint, schema: CategorySchema):
        """Refit the vocab on --train and compare hashes with the checkpoint"""
        if "train" not in run_config.inputs:
            return
        train_data = load_dataset(run_config.inputs["train"], lowercase=run_config.lowercase)
        fitted = fit_vocab(train_data, schema).digest()
        expected = checkpoint.vocab.digest()
        if fitted != expected:
            raise SchemaMismatch(f"vocab hash {fitted[:12]} of {run_config.inputs['train']} does not match "
                                 f"checkpoint vocab hash {expected[:12]}")

    def _evaluate(self, run_config: RunConfig) -> Dict[str, Any]:
        checkpoint = self._load_checkpoint(run_config)
        schema = CategorySchema.for_feature_set(checkpoint.vocab.feature_set)
        self._check_vocab(run_config, checkpoint, schema)

        data = load_dataset(run_config.inputs["data"], run_config.inputs.get("labels"),
                            strict_labels=True, lowercase=run_config.lowercase)
        batch, _ = encode_batch(data, checkpoint.vocab, schema, checkpoint.stats, strict=True)
        if len(batch) == 0:
            raise EmptyDataset(f"nothing to evaluate in {run_config.inputs['data']}", module="metrics")

        scores = checkpoint.model.predict_proba(batch)
        report = evaluate(scores, batch.labels, run_config.threshold)
        self.logger.info(f"Evaluation: {report.to_line()}")

        if run_config.out:
            os.makedirs(run_config.out, exist_ok=True)
            metrics_path = os.path.join(run_config.out, "metrics.txt")
            with open(metrics_path, "w", encoding="utf-8") as f:
                f.write(report.to_line() + "\n" + report.to_table() + "\n")
            record_manifest(os.path.join(run_config.out, "manifest.json"), run_config, {"metrics.txt": metrics_path})
        else:
            record_manifest(None, run_config)
        return success(report=report)

    def _predict(self, run_config: RunConfig) -> Dict[str, Any]:
        checkpoint = self._load_checkpoint(run_config)
        schema = CategorySchema.for_feature_set(checkpoint.vocab.feature_set)

        data = load_dataset(run_config.inputs["data"], lowercase=run_config.lowercase)
        batch, _ = encode_batch(data, checkpoint.vocab, schema, checkpoint.stats)
        scores = checkpoint.model.predict_proba(batch) if len(batch) else np.zeros(0)
        lines = [f"{token_id} {score:.8f}" for token_id, score in zip(batch.token_ids, scores)]
        self.logger.info(f"Predicted {len(lines)} tokens")

        outputs = {}
        if run_config.out:
            with open(run_config.out, "w", encoding="utf-8") as f:
                f.writelines(line + "\n" for line in lines)
            outputs["predictions"] = run_config.out
        record_manifest(sidecar_path(run_config), run_config, outputs)
        return success(lines=lines, out=run_config.out)
