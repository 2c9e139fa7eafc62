"""
Sparse encoding of SLAM tokens over a frozen entity vocabulary
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from kt_errors import SchemaMismatch, UnlabeledToken
from slam_data.records import LabeledExercise
from slam_data.schema import CategorySchema, optional_float, raw_value
from slam_data.vocab import Vocab

logger = logging.getLogger(__name__)

POLICIES = ("none", "standardize", "log1p_standardize")
DEFAULT_POLICY = {"time": "log1p_standardize", "days": "standardize"}
STATS_HEADER = "# slam-fm normalization v1"


@dataclass
class SparseInstance:
    """Active (entity, value) pairs of one token, entities numbered 1..N"""
    active: List[Tuple[int, float]]
    label: Optional[int] = None
    token_id: str = ""

    def to_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        entities = np.array([entity for entity, _ in self.active], dtype=np.int64)
        values = np.array([value for _, value in self.active], dtype=np.float64)
        return entities, values

    def dense(self, n_entities: int) -> np.ndarray:
        x = np.zeros(n_entities)
        for entity, value in self.active:
            x[entity - 1] = value
        return x


@dataclass
class InstanceBatch:
    """
    Instances stacked slot by slot

    Slots are ordered by entity index, which follows schema category order,
    so column c always holds category c. Unknown labels are stored as -1.
    """
    entities: np.ndarray
    values: np.ndarray
    labels: np.ndarray
    token_ids: List[str] = field(default_factory=list)

    @classmethod
    def from_instances(cls, instances: Sequence[SparseInstance], n_slots: int) -> "InstanceBatch":
        entities = np.zeros((len(instances), n_slots), dtype=np.int64)
        values = np.zeros((len(instances), n_slots), dtype=np.float64)
        labels = np.full(len(instances), -1, dtype=np.int64)
        for row, instance in enumerate(instances):
            if len(instance.active) != n_slots:
                raise SchemaMismatch(
                    f"instance '{instance.token_id}' has {len(instance.active)} active entities, "
                    f"expected {n_slots}"
                )
            for slot, (entity, value) in enumerate(sorted(instance.active)):
                entities[row, slot] = entity
                values[row, slot] = value
            if instance.label is not None:
                labels[row] = instance.label
        return cls(entities, values, labels, [instance.token_id for instance in instances])

    def __len__(self) -> int:
        return self.entities.shape[0]

    @property
    def n_slots(self) -> int:
        return self.entities.shape[1]

    @property
    def labeled(self) -> bool:
        return bool(np.all(self.labels >= 0))

    def subset(self, index: np.ndarray) -> "InstanceBatch":
        token_ids = [self.token_ids[i] for i in index] if self.token_ids else []
        return InstanceBatch(self.entities[index], self.values[index], self.labels[index], token_ids)

    @classmethod
    def concat(cls, batches: Sequence["InstanceBatch"]) -> "InstanceBatch":
        return cls(
            np.concatenate([b.entities for b in batches]),
            np.concatenate([b.values for b in batches]),
            np.concatenate([b.labels for b in batches]),
            [token_id for b in batches for token_id in b.token_ids],
        )


@dataclass
class ContinuousStats:
    policy: str
    impute: float
    mean: float
    std: float
    degenerate: bool = False

    def transform(self, value: float) -> float:
        if np.isnan(value):
            value = self.impute
        if self.policy == "none":
            return float(value)
        if self.policy == "log1p_standardize":
            value = np.log1p(value)
        return float((value - self.mean) / self.std)


@dataclass
class NormalizationStats:
    """Per continuous category statistics fitted on training instances"""
    categories: Dict[str, ContinuousStats] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [STATS_HEADER]
        for name, stats in self.categories.items():
            lines.append("\t".join([
                name, stats.policy, repr(stats.impute), repr(stats.mean), repr(stats.std),
                "1" if stats.degenerate else "0",
            ]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "NormalizationStats":
        lines = text.splitlines()
        if not lines or lines[0] != STATS_HEADER:
            raise SchemaMismatch("not a slam-fm normalization file")
        categories = {}
        for line in lines[1:]:
            columns = line.split("\t")
            if len(columns) != 6 or columns[1] not in POLICIES:
                raise SchemaMismatch(f"malformed normalization entry: {line!r}")
            name, policy, impute, mean, std, degenerate = columns
            try:
                categories[name] = ContinuousStats(policy, float(impute), float(mean), float(std), degenerate == "1")
            except ValueError:
                raise SchemaMismatch(f"malformed normalization entry: {line!r}")
        return cls(categories)


def encode(exercise: LabeledExercise, vocab: Vocab, schema: CategorySchema,
           stats: Optional[NormalizationStats] = None, strict: bool = False) -> List[SparseInstance]:
    """
    Encode every token of an exercise as one sparse instance

    Exercise-level categories are copied onto each token. Missing or unseen discrete
    values use the None entity; continuous categories emit their reserved entity with the
    measured value (NaN when missing, imputed by the normalization stats).
    """
    vocab.check_schema(schema)

    instances = []
    for token in exercise.tokens:
        if strict and token.label is None:
            raise UnlabeledToken(f"token '{token.token_id}' has no label")

        active = []
        for category in schema.categories:
            value = raw_value(category, exercise.meta, token)
            if category.continuous:
                measurement = optional_float(value)
                if stats is not None and category.name in stats.categories:
                    measurement = stats.categories[category.name].transform(measurement)
                active.append((vocab.lookup(category.name, None), measurement))
            else:
                active.append((vocab.lookup(category.name, value), 1.0))

        instances.append(SparseInstance(active=active, label=token.label, token_id=token.token_id))
    return instances


def encode_dataset(data: Iterable[LabeledExercise], vocab: Vocab, schema: CategorySchema,
                   stats: Optional[NormalizationStats] = None, strict: bool = False) -> List[SparseInstance]:
    instances = []
    for exercise in data:
        instances.extend(encode(exercise, vocab, schema, stats=stats, strict=strict))
    return instances


def _continuous_entities(vocab: Vocab, schema: CategorySchema) -> Dict[int, str]:
    return {
        vocab.lookup(category.name, None): category.name
        for category in schema.categories if category.continuous
    }


def _resolve_policy(policy: Union[str, Mapping[str, str]], name: str) -> str:
    chosen = policy if isinstance(policy, str) else policy.get(name, "none")
    if chosen not in POLICIES:
        raise ValueError(f"unknown normalization policy '{chosen}'")
    return chosen


def fit_normalization(instances: Sequence[SparseInstance], vocab: Vocab, schema: CategorySchema,
                      policy: Union[str, Mapping[str, str]] = None) -> NormalizationStats:
    """Fit imputation and scaling statistics on training instances"""
    policy = DEFAULT_POLICY if policy is None else policy
    continuous = _continuous_entities(vocab, schema)
    collected: Dict[int, List[float]] = {entity: [] for entity in continuous}
    for instance in instances:
        for entity, value in instance.active:
            if entity in collected and not np.isnan(value):
                collected[entity].append(value)

    stats = NormalizationStats()
    for entity, name in continuous.items():
        chosen = _resolve_policy(policy, name)
        present = np.array(collected[entity], dtype=np.float64)
        impute = float(present.mean()) if present.size else 0.0
        transformed = np.log1p(present) if chosen == "log1p_standardize" else present
        mean = float(transformed.mean()) if transformed.size else 0.0
        std = float(transformed.std()) if transformed.size else 0.0

        degenerate = False
        if chosen != "none" and std == 0.0:
            logger.warning(f"Standard deviation of '{name}' is zero, centering only")
            degenerate = True
            std = 1.0
        stats.categories[name] = ContinuousStats(chosen, impute, mean, std, degenerate)
    return stats


def normalize_continuous(instances: Sequence[SparseInstance], vocab: Vocab, schema: CategorySchema,
                         policy: Union[str, Mapping[str, str]] = None,
                         stats: Optional[NormalizationStats] = None
                         ) -> Tuple[List[SparseInstance], NormalizationStats]:
    """
    Impute and scale continuous values

    Stats are fitted on `instances` unless given (reuse training stats at prediction time).
    """
    if stats is None:
        stats = fit_normalization(instances, vocab, schema, policy)

    continuous = _continuous_entities(vocab, schema)
    normalized = []
    for instance in instances:
        active = [
            (entity, stats.categories[continuous[entity]].transform(value) if entity in continuous else value)
            for entity, value in instance.active
        ]
        normalized.append(replace(instance, active=active))
    return normalized, stats
