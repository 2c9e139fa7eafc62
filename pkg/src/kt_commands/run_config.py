"""
Run configuration
Layers built-in presets, an optional `key = value` config file and command-line flags
"""
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

from dotenv import dotenv_values

from kt_errors import ConfigError, UsageError
from fm_model.params import MODEL_PRESETS, ModelConfig
from fm_training.trainer import DEFAULT_PROTOCOL, TRAIN_PRESETS, TrainConfig
from slam_data.schema import FeatureSet

logger = logging.getLogger(__name__)

DEFAULT_MODEL = "deepfm"
REFIT_MODES = ("none", "union", "validation")
SYNTH_DEFAULTS = {"users": 200, "items": 100, "per_user": 50}
SYNTH_DEV_FRACTION = 0.2


def parse_bool(text: str) -> bool:
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: '{text}'")


def parse_int_list(text: str) -> Tuple[int, ...]:
    text = str(text).strip()
    if not text:
        return ()
    return tuple(int(part) for part in text.split(","))


# config-file key -> converter; flags use the same names with dashes
CONFIG_KEYS: Dict[str, Callable[[str], Any]] = {
    "schema": str,
    "model": str,
    "protocol": str,
    "epochs": int,
    "lr": float,
    "batch": int,
    "embedding_dim": int,
    "link": str,
    "final_activation": str,
    "seed": int,
    "deterministic": parse_bool,
    "patience": int,
    "early_stopping_metric": str,
    "refit": str,
    "dropout": float,
    "global_bias": parse_bool,
    "hidden_widths": parse_int_list,
    "workers": int,
    "dev_fraction": float,
}

MODEL_FIELDS = {
    "embedding_dim": "d",
    "link": "link",
    "final_activation": "final_activation",
    "dropout": "dropout",
    "global_bias": "global_bias",
    "hidden_widths": "hidden_widths",
}

TRAIN_FIELDS = {
    "epochs": "epochs",
    "lr": "learning_rate",
    "batch": "batch_size",
    "deterministic": "deterministic",
    "patience": "patience",
    "early_stopping_metric": "early_stopping_metric",
    "workers": "workers",
}


@dataclass
class RunConfig:
    """Fully resolved settings of one CLI run"""
    command: str
    model_preset: str
    protocol: str
    feature_set: FeatureSet
    model: ModelConfig
    train: TrainConfig
    seed: int = 0
    refit: str = "union"
    dev_fraction: Optional[float] = None
    schema_requested: Optional[FeatureSet] = None
    inputs: Dict[str, str] = field(default_factory=dict)
    out: Optional[str] = None
    manifest: Optional[str] = None
    config_path: Optional[str] = None
    lowercase: bool = True
    threshold: float = 0.5
    users: int = 200
    items: int = 100
    per_user: int = 50

    def _settings(self) -> Dict[str, Any]:
        """Settings that apply to this command, model and training configs excluded"""
        settings: Dict[str, Any] = {"command": self.command, "seed": self.seed, "lowercase": self.lowercase}
        if self.command == "train":
            settings.update({
                "model_preset": self.model_preset,
                "protocol": self.protocol,
                "feature_set": self.feature_set.value,
                "refit": self.refit,
                "dev_fraction": self.dev_fraction,
            })
        elif self.command == "synth":
            settings.update({
                "dev_fraction": self.dev_fraction,
                "synth.users": self.users,
                "synth.items": self.items,
                "synth.per_user": self.per_user,
            })
        elif self.command in ("evaluate", "predict"):
            settings["schema"] = self.schema_requested.value if self.schema_requested is not None else None
            if self.command == "evaluate":
                settings["threshold"] = self.threshold
        return settings

    def resolved_items(self) -> List[Tuple[str, Any]]:
        """Every resolved value of this command as flat (key, value) pairs, sorted by key"""
        items = self._settings()
        items.update({f"input.{role}": path for role, path in self.inputs.items()})
        if self.command == "train":
            items.update({f"model.{k}": v for k, v in self.model.to_dict().items()})
            items.update({f"train.{k}": v for k, v in self.train.to_dict().items()})
        return sorted(items.items())

    def to_dict(self) -> Dict[str, Any]:
        data = self._settings()
        data["seeds"] = {"seed": self.seed}
        if self.command == "train":
            data.update({
                "model_config": self.model.to_dict(),
                "train_config": self.train.to_dict(),
                "deterministic": self.train.deterministic,
            })
            data["seeds"].update({"model_init": self.model.seed, "shuffle": self.train.shuffle_seed,
                                  "split": self.seed})
        elif self.command == "synth":
            data["seeds"].update({"world": self.seed, "split": self.seed})
        return data


def load_config_file(path: str) -> Dict[str, Any]:
    """Read a `key = value` config file; unknown keys and bad values are usage errors"""
    if not os.path.isfile(path):
        raise UsageError(f"config file not found: {path}")

    raw = dotenv_values(path)
    unknown = sorted(set(raw) - set(CONFIG_KEYS))
    if unknown:
        raise UsageError(f"unknown config keys in {path}: {unknown}")

    values = {}
    for key, text in raw.items():
        if text is None:
            raise UsageError(f"config key '{key}' in {path} has no value")
        try:
            values[key] = CONFIG_KEYS[key](text)
        except ValueError as e:
            raise UsageError(f"bad value for '{key}' in {path}: {e}")
    logger.info(f"Loaded {len(values)} settings from {path}")
    return values


def _default_workers() -> int:
    text = os.getenv("SLAMFM_WORKERS", "1")
    try:
        return int(text)
    except ValueError:
        raise UsageError(f"SLAMFM_WORKERS must be an integer, got '{text}'")


def resolve_run_config(command: str, flags: Dict[str, Any]) -> RunConfig:
    """
    Resolve presets, config file and flags into a RunConfig

    Precedence: preset < config file < flag. `flags` is the parsed argument namespace as a dict;
    None means the flag was not given.
    """
    layered: Dict[str, Any] = {}
    config_path = flags.get("config")
    if config_path:
        layered.update(load_config_file(config_path))
    layered.update({key: flags[key] for key in CONFIG_KEYS if flags.get(key) is not None})

    model_preset = layered.get("model", DEFAULT_MODEL)
    if model_preset not in MODEL_PRESETS:
        raise UsageError(f"unknown model preset '{model_preset}', choose from {sorted(MODEL_PRESETS)}")
    protocol = layered.get("protocol", DEFAULT_PROTOCOL[model_preset])
    if protocol not in TRAIN_PRESETS:
        raise UsageError(f"unknown protocol '{protocol}', choose from {sorted(TRAIN_PRESETS)}")
    refit_mode = layered.get("refit", "union")
    if refit_mode not in REFIT_MODES:
        raise UsageError(f"refit must be one of {REFIT_MODES}, got '{refit_mode}'")

    preset = dict(MODEL_PRESETS[model_preset])
    try:
        feature_set = FeatureSet(layered.get("schema", preset.pop("feature_set")))
        schema_requested = FeatureSet(layered["schema"]) if "schema" in layered else None
    except ValueError:
        raise UsageError(f"unknown schema '{layered.get('schema')}', choose from {[f.value for f in FeatureSet]}")

    seed = layered.get("seed", 0)
    model_kwargs = dict(preset, seed=seed)
    model_kwargs.update({MODEL_FIELDS[k]: v for k, v in layered.items() if k in MODEL_FIELDS})
    train_kwargs = dict(TRAIN_PRESETS[protocol], shuffle_seed=seed, workers=_default_workers(), deterministic=False)
    train_kwargs.update({TRAIN_FIELDS[k]: v for k, v in layered.items() if k in TRAIN_FIELDS})

    try:
        model_config = ModelConfig(**model_kwargs)
        train_config = TrainConfig(**train_kwargs)
    except (ConfigError, ValueError) as e:
        raise UsageError(f"invalid configuration: {e}")

    dev_fraction = layered.get("dev_fraction")
    if dev_fraction is not None and not 0.0 < dev_fraction < 1.0:
        raise UsageError(f"dev fraction must be in (0, 1), got {dev_fraction}")

    sizes = {key: default if flags.get(key) is None else flags[key] for key, default in SYNTH_DEFAULTS.items()}
    if command == "synth":
        if dev_fraction is None:
            dev_fraction = SYNTH_DEV_FRACTION
        if min(sizes.values()) < 1:
            raise UsageError(f"users, items and per-user must all be >= 1, got {sizes}")
        if sizes["per_user"] > sizes["items"]:
            raise UsageError(f"per-user ({sizes['per_user']}) cannot exceed items ({sizes['items']})")

    inputs = {
        role: flags[role]
        for role in ("train", "dev", "labels", "data", "checkpoint")
        if flags.get(role)
    }
    if config_path:
        inputs["config"] = config_path

    return RunConfig(
        command=command,
        model_preset=model_preset,
        protocol=protocol,
        feature_set=feature_set,
        model=model_config,
        train=train_config,
        seed=seed,
        refit=refit_mode,
        dev_fraction=dev_fraction,
        schema_requested=schema_requested,
        inputs=inputs,
        out=flags.get("out"),
        manifest=flags.get("manifest"),
        config_path=config_path,
        lowercase=not flags.get("keep_case", False),
        threshold=0.5 if flags.get("threshold") is None else flags["threshold"],
        users=sizes["users"],
        items=sizes["items"],
        per_user=sizes["per_user"],
    )
