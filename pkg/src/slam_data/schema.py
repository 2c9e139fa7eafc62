"""
Category schema: which feature families are encoded, and how raw values are read
"""
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple, Union

from kt_errors import ConfigError
from slam_data.records import MORPH_FEATURES, ExerciseMeta, TokenRecord


class CategoryKind(str, Enum):
    DISCRETE = "discrete"
    CONTINUOUS = "continuous"


class FeatureSet(str, Enum):
    IRT = "irt"
    FUNDAMENTAL = "fundamental"
    FUNDAMENTAL_PLUS = "fundamental-plus"


FUNDAMENTAL_CATEGORIES = (
    "user",
    "token",
    "part_of_speech",
    "dependency_label",
    "exercise_index",
    "countries",
    "client",
    "session",
    "format",
)
NOISY_CATEGORIES = MORPH_FEATURES
CONTINUOUS_CATEGORIES = ("time", "days")


@dataclass(frozen=True)
class Category:
    name: str
    kind: CategoryKind

    @property
    def continuous(self) -> bool:
        return self.kind == CategoryKind.CONTINUOUS


@dataclass(frozen=True)
class CategorySchema:
    feature_set: FeatureSet
    categories: Tuple[Category, ...]

    @classmethod
    def for_feature_set(cls, feature_set: Union[FeatureSet, str]) -> "CategorySchema":
        try:
            feature_set = FeatureSet(feature_set)
        except ValueError:
            raise ConfigError(f"unknown feature set '{feature_set}'", module="encoder")

        if feature_set == FeatureSet.IRT:
            names = [("user", CategoryKind.DISCRETE), ("token", CategoryKind.DISCRETE)]
        else:
            names = [(name, CategoryKind.DISCRETE) for name in FUNDAMENTAL_CATEGORIES]
            if feature_set == FeatureSet.FUNDAMENTAL_PLUS:
                names += [(name, CategoryKind.DISCRETE) for name in NOISY_CATEGORIES]
                names += [(name, CategoryKind.CONTINUOUS) for name in CONTINUOUS_CATEGORIES]

        return cls(feature_set=feature_set, categories=tuple(Category(n, k) for n, k in names))

    @property
    def names(self) -> List[str]:
        return [category.name for category in self.categories]

    @property
    def n_categories(self) -> int:
        return len(self.categories)


def raw_value(category: Category, meta: ExerciseMeta, token: TokenRecord) -> Union[str, float, None]:
    """
    Read the raw value of a category for one token

    Discrete categories give a string (None when missing), continuous ones a float
    (None when missing). Only the first country is used.
    """
    name = category.name
    if name == "user":
        return meta.user
    if name == "token":
        return token.token
    if name == "part_of_speech":
        return token.part_of_speech
    if name == "dependency_label":
        return token.dependency_label
    if name == "exercise_index":
        return str(meta.exercise_index)
    if name == "countries":
        return meta.countries[0] if meta.countries else None
    if name in ("client", "session", "format"):
        return getattr(meta, name)
    if name in NOISY_CATEGORIES:
        return token.morph_features.get(name)
    if name == "time":
        return meta.time
    if name == "days":
        return meta.days
    raise ConfigError(f"no reader for category '{name}'", module="encoder")


def optional_float(value: Optional[float]) -> float:
    return float("nan") if value is None else float(value)
