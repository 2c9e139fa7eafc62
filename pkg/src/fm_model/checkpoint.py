"""
Versioned model checkpoints in canonical JSON
"""
import json
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from kt_errors import SchemaMismatch
from fm_model.model import DeepFM
from fm_model.params import ModelConfig
from slam_data.encoder import NormalizationStats
from slam_data.vocab import Vocab

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "slam-fm-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    model: DeepFM
    vocab: Vocab
    stats: Optional[NormalizationStats] = None


def checkpoint_to_text(checkpoint: Checkpoint) -> str:
    """
    Canonical text form: sorted keys, floats in shortest round-trip notation

    Identical checkpoints always serialize to identical bytes.
    """
    params = {
        name: {"shape": list(array.shape), "data": array.ravel().tolist()}
        for name, array in checkpoint.model.named_arrays().items()
    }
    document = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model_config": checkpoint.model.config.to_dict(),
        "feature_set": checkpoint.vocab.feature_set.value,
        "vocab_sha256": checkpoint.vocab.digest(),
        "vocab": checkpoint.vocab.to_text(),
        "normalization": checkpoint.stats.to_text() if checkpoint.stats is not None else None,
        "params": params,
    }
    return json.dumps(document, sort_keys=True, indent=1) + "\n"


def checkpoint_from_text(text: str) -> Checkpoint:
    """Parse and validate a checkpoint; anything unreadable is a SchemaMismatch"""
    try:
        document = json.loads(text)
        if not isinstance(document, dict):
            raise SchemaMismatch("checkpoint is not a JSON object", module="model_core")
        return _from_document(document)
    except (ValueError, KeyError, TypeError, AttributeError) as e:
        raise SchemaMismatch(f"unreadable checkpoint: {type(e).__name__}: {e}", module="model_core")


def _from_document(document: dict) -> Checkpoint:
    if document.get("format") != CHECKPOINT_FORMAT:
        raise SchemaMismatch("not a slam-fm checkpoint", module="model_core")
    if document.get("version") != CHECKPOINT_VERSION:
        raise SchemaMismatch(f"unsupported checkpoint version {document.get('version')}", module="model_core")

    vocab = Vocab.from_text(document["vocab"])
    if vocab.digest() != document["vocab_sha256"]:
        raise SchemaMismatch("checkpoint vocab does not match its recorded hash", module="model_core")

    stats = None
    if document.get("normalization") is not None:
        stats = NormalizationStats.from_text(document["normalization"])

    config = ModelConfig.from_dict(document["model_config"])
    model = DeepFM.build(config, vocab)
    arrays = model.named_arrays()
    if set(arrays) != set(document["params"]):
        raise SchemaMismatch("checkpoint parameters do not match its model config", module="model_core")
    for name, entry in document["params"].items():
        data = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        if data.shape != arrays[name].shape:
            raise SchemaMismatch(f"parameter '{name}' has shape {data.shape}, expected {arrays[name].shape}",
                                 module="model_core")
        arrays[name][...] = data
    return Checkpoint(model, vocab, stats)


def save_checkpoint(path: str, checkpoint: Checkpoint):
    with open(path, "w", encoding="utf-8") as f:
        f.write(checkpoint_to_text(checkpoint))
    logger.info(f"Checkpoint written to {path}")


def load_checkpoint(path: str) -> Checkpoint:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except UnicodeDecodeError:
        raise SchemaMismatch(f"checkpoint {path} is not UTF-8 text", module="model_core")
    checkpoint = checkpoint_from_text(text)
    logger.info(f"Checkpoint loaded from {path} (N={checkpoint.vocab.N})")
    return checkpoint
