"""
Entity vocabulary: (category, raw value) pairs numbered 1..N
"""
import hashlib
import logging
from typing import Dict, Iterable, List, Optional, Tuple

from kt_errors import EmptyDataset, SchemaMismatch
from slam_data.records import LabeledExercise
from slam_data.schema import CategorySchema, FeatureSet, raw_value

logger = logging.getLogger(__name__)

VOCAB_HEADER = "# slam-fm vocab v1"
NULL_TEXT = "\\N"

Entity = Tuple[str, Optional[str]]


def _escape(value: Optional[str]) -> str:
    if value is None:
        return NULL_TEXT
    return value.replace("\\", "\\\\")


def _unescape(text: str) -> Optional[str]:
    if text == NULL_TEXT:
        return None
    return text.replace("\\\\", "\\")


class Vocab:
    """
    Frozen entity index

    Each discrete category owns a None entity used for missing and unseen values;
    each continuous category owns exactly one reserved entity, keyed (name, None).
    Entities are numbered in schema category order, values in first-occurrence order,
    with the None entity last within its category.
    """

    def __init__(self, feature_set: FeatureSet, entities: List[Entity]):
        self.feature_set = FeatureSet(feature_set)
        self.entities = list(entities)
        self.entity_index: Dict[Entity, int] = {}
        self._slot_of_category: Dict[str, int] = {}
        for index, (category, value) in enumerate(self.entities, start=1):
            if (category, value) in self.entity_index:
                raise SchemaMismatch(f"duplicate vocab entry ({category}, {value})")
            self.entity_index[(category, value)] = index
            if category not in self._slot_of_category:
                self._slot_of_category[category] = len(self._slot_of_category)

    @property
    def N(self) -> int:
        return len(self.entities)

    @property
    def categories(self) -> List[str]:
        return list(self._slot_of_category)

    @property
    def n_categories(self) -> int:
        return len(self._slot_of_category)

    def lookup(self, category: str, value: Optional[str]) -> int:
        """Index of (category, value); unseen values resolve to the None entity"""
        index = self.entity_index.get((category, value))
        if index is None:
            index = self.entity_index[(category, None)]
        return index

    def category_of_entity(self, index: int) -> str:
        return self.entities[index - 1][0]

    def value_of_entity(self, index: int) -> Optional[str]:
        return self.entities[index - 1][1]

    def check_schema(self, schema: CategorySchema):
        if schema.feature_set != self.feature_set or schema.names != self.categories:
            raise SchemaMismatch(
                f"vocab was fitted for '{self.feature_set.value}' "
                f"but schema is '{schema.feature_set.value}'"
            )

    def to_text(self) -> str:
        lines = [f"{VOCAB_HEADER} feature_set={self.feature_set.value}"]
        for index, (category, value) in enumerate(self.entities, start=1):
            lines.append(f"{category}\t{_escape(value)}\t{index}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Vocab":
        lines = text.splitlines()
        if not lines or not lines[0].startswith(VOCAB_HEADER):
            raise SchemaMismatch("not a slam-fm vocab file")
        _, _, feature_set = lines[0].partition("feature_set=")

        entities: List[Entity] = []
        for expected, line in enumerate(lines[1:], start=1):
            columns = line.split("\t")
            if len(columns) != 3 or not columns[2].isdigit():
                raise SchemaMismatch(f"malformed vocab entry {expected}: {line!r}")
            category, value, index = columns
            if int(index) != expected:
                raise SchemaMismatch(f"vocab indices are not contiguous at entry {expected}")
            entities.append((category, _unescape(value)))
        try:
            feature_set = FeatureSet(feature_set.strip())
        except ValueError:
            raise SchemaMismatch(f"unknown feature set '{feature_set.strip()}' in vocab header")
        return cls(feature_set, entities)

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.feature_set == other.feature_set \
            and self.entities == other.entities


def fit_vocab(data: Iterable[LabeledExercise], schema: CategorySchema) -> Vocab:
    """Collect every (category, value) pair seen in the data"""
    data = list(data)
    if not data:
        raise EmptyDataset("cannot fit a vocab on an empty dataset", module="encoder")

    seen: Dict[str, Dict[str, None]] = {c.name: {} for c in schema.categories if not c.continuous}
    for exercise in data:
        for token in exercise.tokens:
            for category in schema.categories:
                if category.continuous:
                    continue
                value = raw_value(category, exercise.meta, token)
                if value is not None:
                    seen[category.name].setdefault(value, None)

    entities: List[Entity] = []
    for category in schema.categories:
        if not category.continuous:
            entities.extend((category.name, value) for value in seen[category.name])
        entities.append((category.name, None))

    vocab = Vocab(schema.feature_set, entities)
    logger.info(f"Fitted vocab for '{schema.feature_set.value}': N={vocab.N} entities, "
                f"{vocab.n_categories} categories")
    return vocab
