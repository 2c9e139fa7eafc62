"""
Typed records for SLAM interaction logs
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional

# SyntaxNet morphological features the encoder knows about
MORPH_FEATURES = (
    "Definite",
    "Gender",
    "Number",
    "fPOS",
    "Person",
    "PronType",
    "Mood",
    "Tense",
    "VerbForm",
)


@dataclass
class ExerciseMeta:
    """Exercise-level metadata taken from the `#` header lines"""
    user: str
    countries: List[str]
    days: float
    client: str
    session: str
    format: str
    time: Optional[float] = None
    exercise_index: int = 0
    prompt: Optional[str] = None
    extra: Dict[str, str] = field(default_factory=dict)


@dataclass
class TokenRecord:
    """One token line; label 1 means the token was produced incorrectly"""
    token_id: str
    token: str
    part_of_speech: str
    morph_features: Dict[str, str]
    dependency_label: str
    dependency_head: int
    label: Optional[int] = None
    other_morph: Dict[str, str] = field(default_factory=dict)


@dataclass
class LabeledExercise:
    meta: ExerciseMeta
    tokens: List[TokenRecord]

    @property
    def labeled(self) -> bool:
        return all(token.label is not None for token in self.tokens)
