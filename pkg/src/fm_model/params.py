"""
Model configuration and parameter containers
"""
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from kt_errors import ConfigError
from fm_model.links import LinkFunction

FINAL_ACTIVATIONS = ("relu", "linear")


@dataclass
class ModelConfig:
    d: int = 10
    deep_enabled: bool = True
    hidden_widths: Tuple[int, ...] = (32, 32)
    final_activation: str = "relu"
    link: LinkFunction = LinkFunction.SIGMOID
    seed: int = 0
    dropout: float = 0.0
    global_bias: bool = False

    def __post_init__(self):
        self.link = LinkFunction(self.link)
        self.hidden_widths = tuple(int(width) for width in self.hidden_widths)
        self.validate()

    def validate(self):
        if self.d < 0:
            raise ConfigError(f"embedding size must be >= 0, got {self.d}")
        if self.deep_enabled and self.d < 1:
            raise ConfigError("the deep component needs an embedding size >= 1")
        if self.final_activation not in FINAL_ACTIVATIONS:
            raise ConfigError(f"final activation must be one of {FINAL_ACTIVATIONS}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if any(width < 1 for width in self.hidden_widths):
            raise ConfigError(f"hidden widths must be positive, got {self.hidden_widths}")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["link"] = self.link.value
        data["hidden_widths"] = list(self.hidden_widths)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelConfig":
        return cls(**data)


# Model presets; each names the feature set it is meant for
MODEL_PRESETS: Dict[str, Dict[str, Any]] = {
    "irt": {"feature_set": "irt", "d": 0, "deep_enabled": False, "link": "sigmoid"},
    "lr-baseline": {"feature_set": "fundamental", "d": 0, "deep_enabled": False, "link": "sigmoid"},
    "vanilla-fm": {"feature_set": "fundamental", "d": 20, "deep_enabled": False, "link": "probit"},
    "deepfm": {"feature_set": "fundamental", "d": 10, "deep_enabled": True, "link": "sigmoid"},
    "deepfm-star": {"feature_set": "fundamental-plus", "d": 10, "deep_enabled": True, "link": "sigmoid"},
}


@dataclass
class FmParams:
    """Per-entity biases w (N,), embeddings V (N, d) and an optional intercept w0"""
    w: np.ndarray
    V: np.ndarray
    w0: np.ndarray = field(default_factory=lambda: np.zeros(1))

    @property
    def N(self) -> int:
        return self.w.shape[0]

    @property
    def d(self) -> int:
        return self.V.shape[1]

    def copy(self) -> "FmParams":
        return FmParams(self.w.copy(), self.V.copy(), self.w0.copy())


@dataclass
class DeepParams:
    """Feedforward layers; weights[l] has shape (out, in)"""
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    @property
    def input_width(self) -> int:
        return self.weights[0].shape[1]

    def copy(self) -> "DeepParams":
        return DeepParams([W.copy() for W in self.weights], [b.copy() for b in self.biases])


def init_params(config: ModelConfig, vocab, seed: Optional[int] = None) -> Tuple[FmParams, Optional[DeepParams]]:
    """
    Draw initial parameters

    w = 0, V ~ normal(0, 0.01), deep weights ~ normal(0, 2 / fan_in), deep biases = 0.
    `vocab` only needs `N` and `n_categories`.
    """
    rng = np.random.default_rng(config.seed if seed is None else seed)
    fm = FmParams(
        w=np.zeros(vocab.N),
        V=rng.normal(0.0, 0.01, size=(vocab.N, config.d)),
    )
    if not config.deep_enabled:
        return fm, None

    widths = [vocab.n_categories * config.d, *config.hidden_widths, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return fm, DeepParams(weights, biases)
