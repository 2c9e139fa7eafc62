"""
Data Executor
Runs the `synth` and `dump` subcommands
"""
import io
import logging
import os
from typing import Any, Dict

from kt_errors import SlamFmError, UsageError
from kt_commands.manifest import record_manifest, sidecar_path, write_manifest
from kt_commands.results import failure, success
from kt_commands.run_config import RunConfig
from slam_data.slam_reader import dump_dataset, load_dataset, parse_dataset, split_by_fraction
from slam_data.synth import gen_rasch, write_truth


class DataExecutor:
    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def execute(self, action: str, run_config: RunConfig) -> Dict[str, Any]:
        self.logger.info(f"Running data action: {action}")
        try:
            if action == "synth":
                return self._synth(run_config)
            elif action == "dump":
                return self._dump(run_config)
            else:
                raise UsageError(f"unknown data action '{action}'")
        except (SlamFmError, OSError) as e:
            return failure(self.logger, e)

    def _synth(self, run_config: RunConfig) -> Dict[str, Any]:
        """Rasch world -> train.slam, dev.slam, dev.key, truth.tsv"""
        out = run_config.out
        os.makedirs(out, exist_ok=True)

        world, text = gen_rasch(run_config.users, run_config.items, run_config.per_user, run_config.seed)
        exercises = parse_dataset(io.StringIO(text))
        train, dev = split_by_fraction(exercises, 1.0 - run_config.dev_fraction, run_config.seed)

        paths = {name: os.path.join(out, name) for name in ("train.slam", "dev.slam", "dev.key", "truth.tsv")}
        with open(paths["train.slam"], "w", encoding="utf-8") as f:
            dump_dataset(train, f)
        with open(paths["dev.slam"], "w", encoding="utf-8") as f:
            dump_dataset(dev, f)
        with open(paths["dev.key"], "w", encoding="utf-8") as f:
            for exercise in dev:
                for token in exercise.tokens:
                    f.write(f"{token.token_id} {token.label}\n")
        with open(paths["truth.tsv"], "w", encoding="utf-8") as f:
            write_truth(world, f)

        write_manifest(os.path.join(out, "manifest.json"), run_config, paths)
        self.logger.info(f"Synthetic data written to {out}: {len(train)} train / {len(dev)} dev exercises")
        return success(out=out, n_train=len(train), n_dev=len(dev))

    def _dump(self, run_config: RunConfig) -> Dict[str, Any]:
        path = run_config.inputs.get("data")
        if not path:
            raise UsageError("dump needs --data")
        exercises = load_dataset(path, run_config.inputs.get("labels"), lowercase=run_config.lowercase)

        buffer = io.StringIO()
        dump_dataset(exercises, buffer)
        outputs = {}
        if run_config.out:
            with open(run_config.out, "w", encoding="utf-8") as f:
                f.write(buffer.getvalue())
            outputs["dump"] = run_config.out
        record_manifest(sidecar_path(run_config), run_config, outputs)
        return success(out=run_config.out, text=None if run_config.out else buffer.getvalue())
