"""
SLAM log reader and writer
Parses the shared-task text format (header lines + token lines + optional key file)
"""
import logging
from typing import Dict, Iterable, List, Optional, TextIO, Tuple

import numpy as np

from kt_errors import DuplicateKey, EmptyDataset, MalformedLine, MissingLabel
from slam_data.records import MORPH_FEATURES, ExerciseMeta, LabeledExercise, TokenRecord

logger = logging.getLogger(__name__)

REQUIRED_KEYS = ("user", "countries", "days", "client", "session", "format")
KNOWN_KEYS = REQUIRED_KEYS + ("time",)


class _ExerciseBuilder:
    """Accumulates header and token lines until a blank line closes the exercise"""

    def __init__(self, line_no: int):
        self.first_line_no = line_no
        self.fields: Dict[str, str] = {}
        self.prompt: Optional[str] = None
        self.tokens: List[TokenRecord] = []

    def add_header(self, line_no: int, line: str):
        body = line[1:].strip()
        if body.startswith("prompt:"):
            if self.prompt is not None:
                raise DuplicateKey(line_no, "prompt")
            self.prompt = body[len("prompt:"):]
            return

        if not body:
            raise MalformedLine(line_no, line, "empty metadata line")

        for pair in body.split():
            key, sep, value = pair.partition(":")
            if not sep or not key:
                raise MalformedLine(line_no, line, f"expected key:value, got '{pair}'")
            if key in self.fields:
                raise DuplicateKey(line_no, key)
            self.fields[key] = value

    def build(self, exercise_index: int, line_no: int, reported: set) -> LabeledExercise:
        if not self.tokens:
            raise MalformedLine(line_no, "", "exercise has no token lines")

        missing = [key for key in REQUIRED_KEYS if key not in self.fields]
        if missing:
            raise MalformedLine(self.first_line_no, "", f"missing metadata keys {missing}")

        countries = [c for c in self.fields["countries"].split("|") if c]
        if not countries:
            raise MalformedLine(self.first_line_no, "", "empty countries list")

        days = _parse_non_negative(self.fields["days"], self.first_line_no, "days")
        time_field = self.fields.get("time")
        time = None
        if time_field is not None and time_field.lower() != "null":
            time = _parse_non_negative(time_field, self.first_line_no, "time")

        extra = {k: v for k, v in self.fields.items() if k not in KNOWN_KEYS}
        new_keys = sorted(set(extra) - reported)
        if new_keys:
            logger.warning(f"Keeping unknown metadata keys {new_keys} (first seen at line {self.first_line_no})")
            reported.update(new_keys)

        meta = ExerciseMeta(
            user=self.fields["user"],
            countries=countries,
            days=days,
            client=self.fields["client"],
            session=self.fields["session"],
            format=self.fields["format"],
            time=time,
            exercise_index=exercise_index,
            prompt=self.prompt,
            extra=extra,
        )
        return LabeledExercise(meta=meta, tokens=self.tokens)


def _parse_non_negative(text: str, line_no: int, key: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise MalformedLine(line_no, text, f"'{key}' is not a number")
    if not np.isfinite(value) or value < 0:
        raise MalformedLine(line_no, text, f"'{key}' must be a non-negative number")
    return value


def _parse_morph(column: str, line_no: int, line: str) -> Tuple[Dict[str, str], Dict[str, str]]:
    if column == "_":
        return {}, {}
    known, other = {}, {}
    for item in column.split("|"):
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise MalformedLine(line_no, line, f"bad morphological feature '{item}'")
        if key in MORPH_FEATURES:
            known[key] = value
        else:
            other[key] = value
    return known, other


def _parse_token(line_no: int, line: str, lowercase: bool,
                 labels: Optional[Dict[str, int]]) -> TokenRecord:
    columns = line.split()
    if len(columns) not in (6, 7):
        raise MalformedLine(line_no, line, f"expected 6 or 7 columns, got {len(columns)}")

    token_id, token, pos, morph, dep_label, dep_head = columns[:6]
    try:
        head = int(dep_head)
    except ValueError:
        raise MalformedLine(line_no, line, "dependency head is not an integer")

    inline_label = None
    if len(columns) == 7:
        if columns[6] not in ("0", "1"):
            raise MalformedLine(line_no, line, "label column must be 0 or 1")
        inline_label = int(columns[6])

    known, other = _parse_morph(morph, line_no, line)
    label = labels.get(token_id) if labels is not None else inline_label

    return TokenRecord(
        token_id=token_id,
        token=token.lower() if lowercase else token,
        part_of_speech=pos,
        morph_features=known,
        dependency_label=dep_label,
        dependency_head=head,
        label=label,
        other_morph=other,
    )


def parse_dataset(reader: Iterable[str], labels: Optional[Dict[str, int]] = None,
                  strict_labels: bool = False, lowercase: bool = True) -> List[LabeledExercise]:
    """
    Parse a SLAM-format stream into exercises

    Args:
        reader: line stream (file object or list of lines)
        labels: optional token_id -> label map; when given it replaces inline labels
        strict_labels: raise MissingLabel for tokens without a label
        lowercase: lowercase surface tokens

    Returns:
        Exercises in file order, exercise_index counted per user
    """
    exercises: List[LabeledExercise] = []
    per_user_count: Dict[str, int] = {}
    reported_keys: set = set()
    builder: Optional[_ExerciseBuilder] = None
    line_no = 0

    def close(at_line: int):
        user = builder.fields.get("user", "")
        exercise = builder.build(per_user_count.get(user, 0), at_line, reported_keys)
        per_user_count[user] = per_user_count.get(user, 0) + 1
        exercises.append(exercise)

    for line_no, raw in enumerate(reader, start=1):
        line = raw.rstrip("\r\n")

        if not line.strip():
            if builder is not None:
                close(line_no)
                builder = None
            continue

        if line.startswith("#"):
            if builder is None:
                builder = _ExerciseBuilder(line_no)
            elif builder.tokens:
                raise MalformedLine(line_no, line, "metadata line inside a token block")
            builder.add_header(line_no, line)
            continue

        if builder is None or (not builder.fields and builder.prompt is None):
            raise MalformedLine(line_no, line, "token line outside an exercise")

        token = _parse_token(line_no, line, lowercase, labels)
        if strict_labels and token.label is None:
            raise MissingLabel(f"line {line_no}: no label for token '{token.token_id}'")
        builder.tokens.append(token)

    if builder is not None:
        close(line_no + 1)

    return exercises


def parse_labels(reader: Iterable[str]) -> Dict[str, int]:
    """Parse a key file of `token_id label` lines"""
    labels: Dict[str, int] = {}
    for line_no, raw in enumerate(reader, start=1):
        line = raw.strip()
        if not line:
            continue
        columns = line.split()
        if len(columns) != 2 or columns[1] not in ("0", "1"):
            raise MalformedLine(line_no, line, "expected 'token_id label'")
        labels[columns[0]] = int(columns[1])
    return labels


def load_dataset(path: str, labels_path: Optional[str] = None, strict_labels: bool = False,
                 lowercase: bool = True) -> List[LabeledExercise]:
    """Read a SLAM file (and optional key file) from disk"""
    labels = None
    if labels_path:
        with open(labels_path, "r", encoding="utf-8") as f:
            labels = parse_labels(f)

    with open(path, "r", encoding="utf-8") as f:
        exercises = parse_dataset(f, labels=labels, strict_labels=strict_labels, lowercase=lowercase)

    n_tokens = sum(len(exercise.tokens) for exercise in exercises)
    logger.info(f"Loaded {len(exercises)} exercises ({n_tokens} tokens) from {path}")
    return exercises


def _format_number(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def dump_dataset(exercises: Iterable[LabeledExercise], writer: TextIO, with_labels: bool = True):
    """Write exercises back in canonical SLAM text form"""
    for exercise in exercises:
        meta = exercise.meta
        if meta.prompt is not None:
            writer.write(f"# prompt:{meta.prompt}\n")

        pairs = [
            f"user:{meta.user}",
            f"countries:{'|'.join(meta.countries)}",
            f"days:{_format_number(meta.days)}",
            f"client:{meta.client}",
            f"session:{meta.session}",
            f"format:{meta.format}",
            f"time:{'null' if meta.time is None else _format_number(meta.time)}",
        ]
        pairs.extend(f"{key}:{value}" for key, value in meta.extra.items())
        writer.write("# " + " ".join(pairs) + "\n")

        for token in exercise.tokens:
            morph = {**token.morph_features, **token.other_morph}
            morph_column = "|".join(f"{k}={v}" for k, v in morph.items()) or "_"
            columns = [
                token.token_id,
                token.token,
                token.part_of_speech,
                morph_column,
                token.dependency_label,
                str(token.dependency_head),
            ]
            if with_labels and token.label is not None:
                columns.append(str(token.label))
            writer.write(" ".join(columns) + "\n")

        writer.write("\n")


def split_by_fraction(data: List[LabeledExercise], fraction: float,
                      seed: int) -> Tuple[List[LabeledExercise], List[LabeledExercise]]:
    """
    Split exercises into train and validation sets

    The train side gets round(fraction * total) exercises (Python rounding, half to even).
    Both sides keep file order.
    """
    if not data:
        raise EmptyDataset("cannot split an empty dataset")
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(data))
    n_train = round(fraction * len(data))
    train_idx = set(order[:n_train].tolist())

    train = [exercise for i, exercise in enumerate(data) if i in train_idx]
    validation = [exercise for i, exercise in enumerate(data) if i not in train_idx]
    return train, validation
