"""Dataset manifests, prediction files, and the truth/prediction join."""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
import os
from collections import Counter
from functools import cached_property
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence, Union

import numpy as np

from .domain import (
    DEFAULT_EXPRESSIONS,
    TaskKind,
    parse_age,
    parse_gender,
    parse_race,
)
from .errors import ShapeMismatchError, ValidationError

log = logging.getLogger(__name__)

DEMOGRAPHIC_COLUMNS = ("age", "gender", "race")


class VaPoint(NamedTuple):
    valence: float
    arousal: float


# expression -> category index, AU -> tuple of per-AU values, VA -> VaPoint
TaskLabel = Union[int, tuple, VaPoint]


@dataclasses.dataclass(frozen=True)
class Schema:
    task: TaskKind
    au_ids: tuple[str, ...] | None = None  # None: take the au_* columns from the header
    vocabulary: tuple[str, ...] = DEFAULT_EXPRESSIONS

    def __post_init__(self):
        object.__setattr__(self, "task", TaskKind(self.task))
        if self.au_ids is not None:
            object.__setattr__(self, "au_ids", tuple(str(a) for a in self.au_ids))
        object.__setattr__(self, "vocabulary", tuple(self.vocabulary))


@dataclasses.dataclass(frozen=True)
class Sample:
    sample_id: str
    subject_id: str | None
    label: TaskLabel
    age_bin: str | None
    gender: str | None
    race: str

    @property
    def group_id(self) -> str:
        return self.subject_id if self.subject_id is not None else self.sample_id


@dataclasses.dataclass(frozen=True)
class PredictionRecord:
    sample_id: str
    label: TaskLabel


@dataclasses.dataclass(frozen=True, eq=False)
class Manifest:
    schema: Schema
    samples: tuple[Sample, ...]
    n_columns: int = 0
    # non-blank demographic cells that matched no enumeration member
    unrecognized: dict = dataclasses.field(default_factory=dict)
    source: str | None = None

    def __len__(self) -> int:
        return len(self.samples)

    def __eq__(self, other):
        if not isinstance(other, Manifest):
            return NotImplemented
        return self.schema == other.schema and self.samples == other.samples

    @property
    def task(self) -> TaskKind:
        return self.schema.task

    @property
    def au_ids(self) -> tuple[str, ...]:
        return self.schema.au_ids or ()

    @property
    def n_rows(self) -> int:
        return len(self.samples)

    @cached_property
    def by_id(self) -> dict[str, Sample]:
        return {s.sample_id: s for s in self.samples}

    def sorted(self) -> "Manifest":
        """Copy with samples ordered by sample_id (the canonical order)."""
        return dataclasses.replace(self, samples=tuple(sorted(self.samples, key=lambda s: s.sample_id)))

    def subset(self, sample_ids: Iterable[str]) -> "Manifest":
        keep = set(sample_ids)
        return dataclasses.replace(self, samples=tuple(s for s in self.samples if s.sample_id in keep))

    def label_array(self) -> np.ndarray:
        return labels_to_array(self.schema, [s.label for s in self.samples])


def labels_to_array(schema: Schema, labels: Sequence[TaskLabel]) -> np.ndarray:
    if schema.task is TaskKind.EXPR:
        return np.asarray(labels, dtype=np.int64).reshape(len(labels))
    if schema.task is TaskKind.AU:
        k = len(schema.au_ids or ())
        return np.asarray(labels, dtype=np.int64).reshape(len(labels), k)
    return np.asarray(labels, dtype=np.float64).reshape(len(labels), 2)


# ---------------------------------------------------------------------------
# loading


def _resolve_au_ids(schema: Schema, header: list[str], prefix: str, path) -> tuple[str, ...]:
    present = tuple(h[len(prefix):] for h in header if h.startswith(prefix))
    if schema.au_ids is None:
        if not present:
            raise ValidationError(f"{path}: missing required column '{prefix}<id>' for the AU task")
        return present
    missing = [a for a in schema.au_ids if a not in present]
    if missing:
        raise ValidationError(f"{path}: missing required column {prefix + missing[0]!r}")
    extra = [a for a in present if a not in schema.au_ids]
    if extra:
        raise ValidationError(f"{path}: column {prefix + extra[0]!r} is not in the declared AU list")
    return schema.au_ids


def _task_columns(schema: Schema, header: list[str], prefix: str, path) -> tuple[Schema, list[str]]:
    task = schema.task
    if task is TaskKind.EXPR:
        cols = [prefix + "expression"]
    elif task is TaskKind.VA:
        cols = [prefix + "valence", prefix + "arousal"]
    else:
        au_ids = _resolve_au_ids(schema, header, prefix + "au_", path)
        schema = dataclasses.replace(schema, au_ids=au_ids)
        cols = [f"{prefix}au_{a}" for a in au_ids]
    for c in cols:
        if c not in header:
            raise ValidationError(f"{path}: missing required column {c!r}")
    return schema, cols


def _parse_expression(text: str, vocabulary: tuple[str, ...], where: str) -> int:
    key = text.strip()
    if key.lstrip("-").isdigit():
        idx = int(key)
    else:
        lowered = [v.lower() for v in vocabulary]
        if key.lower() not in lowered:
            raise ValidationError(f"{where}: expression {text!r} is not in the vocabulary")
        idx = lowered.index(key.lower())
    if not 0 <= idx < len(vocabulary):
        raise ValidationError(f"{where}: expression index {idx} outside vocabulary of size {len(vocabulary)}")
    return idx


def _parse_int(text: str, lo: int, hi: int, where: str, what: str) -> int:
    try:
        value = int(text.strip())
    except ValueError:
        raise ValidationError(f"{where}: {what} {text!r} is not an integer") from None
    if not lo <= value <= hi:
        raise ValidationError(f"{where}: {what} {value} outside {lo}..{hi}")
    return value


def _parse_float(text: str, where: str, what: str) -> float:
    try:
        value = float(text.strip())
    except ValueError:
        raise ValidationError(f"{where}: {what} {text!r} is not a decimal number") from None
    if not math.isfinite(value):
        raise ValidationError(f"{where}: {what} must be finite")
    return value


def _parse_label(schema: Schema, cells: list[str], where: str, predicted: bool) -> TaskLabel:
    if schema.task is TaskKind.EXPR:
        return _parse_expression(cells[0], schema.vocabulary, where)
    if schema.task is TaskKind.AU:
        hi = 1 if predicted else 5
        return tuple(_parse_int(c, 0, hi, where, "AU value") for c in cells)
    return VaPoint(_parse_float(cells[0], where, "valence"), _parse_float(cells[1], where, "arousal"))


def load_manifest(path: str | os.PathLike, schema: Schema) -> Manifest:
    """Parse a manifest CSV into validated :class:`Sample` rows.

    Demographic cells that match no enumeration member become unlabeled and
    are tallied in ``Manifest.unrecognized``; everything else malformed raises
    :class:`ValidationError` with the offending line number.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file, expected a header row") from None
        for col in ("sample_id", *DEMOGRAPHIC_COLUMNS):
            if col not in header:
                raise ValidationError(f"{path}: missing required column {col!r}")
        schema, task_cols = _task_columns(schema, header, "", path)
        i_sid = header.index("sample_id")
        i_sub = header.index("subject_id") if "subject_id" in header else None
        i_task = [header.index(c) for c in task_cols]
        i_age, i_gender, i_race = (header.index(c) for c in DEMOGRAPHIC_COLUMNS)

        unrecognized: Counter = Counter()
        samples = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            where = f"{path}:{lineno}"
            if len(row) != len(header):
                raise ValidationError(f"{where}: expected {len(header)} fields, found {len(row)}")
            sid = row[i_sid].strip()
            if not sid:
                raise ValidationError(f"{where}: empty sample_id")
            subject = row[i_sub].strip() or None if i_sub is not None else None
            label = _parse_label(schema, [row[i] for i in i_task], where, predicted=False)
            age, ok_age = parse_age(row[i_age])
            gender, ok_gender = parse_gender(row[i_gender])
            race, ok_race = parse_race(row[i_race])
            for field, ok in (("age", ok_age), ("gender", ok_gender), ("race", ok_race)):
                if not ok:
                    unrecognized[field] += 1
            samples.append(Sample(sid, subject, label, age, gender, race))

    counts = Counter(s.sample_id for s in samples)
    dupes = sorted(k for k, v in counts.items() if v > 1)
    if dupes:
        raise ValidationError(f"{path}: duplicate sample_id(s): " + ", ".join(dupes))
    if unrecognized:
        log.warning(
            "%s: %d demographic value(s) outside the enumerations mapped to unlabeled (%s)",
            path,
            sum(unrecognized.values()),
            ", ".join(f"{k}={v}" for k, v in sorted(unrecognized.items())),
        )
    return Manifest(schema, tuple(samples), len(header), dict(unrecognized), str(path))


def _format_float(x: float) -> str:
    return repr(float(x))


def write_manifest(manifest: Manifest, path: str | os.PathLike) -> Path:
    """Serialise ``manifest`` in the standard CSV format (reload-exact)."""
    path = Path(path)
    schema = manifest.schema
    if schema.task is TaskKind.EXPR:
        task_cols = ["expression"]
    elif schema.task is TaskKind.VA:
        task_cols = ["valence", "arousal"]
    else:
        task_cols = [f"au_{a}" for a in manifest.au_ids]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "subject_id", *task_cols, *DEMOGRAPHIC_COLUMNS])
        for s in manifest.samples:
            if schema.task is TaskKind.EXPR:
                cells = [schema.vocabulary[s.label]]
            elif schema.task is TaskKind.VA:
                cells = [_format_float(s.label[0]), _format_float(s.label[1])]
            else:
                cells = [str(v) for v in s.label]
            w.writerow([s.sample_id, s.subject_id or "", *cells, s.age_bin or "", s.gender or "", s.race])
    return path


# ---------------------------------------------------------------------------
# predictions


def load_predictions(path: str | os.PathLike, schema: Schema) -> list[PredictionRecord]:
    """Read a prediction CSV whose columns are shaped for ``schema.task``.

    A file lacking the task's ``pred_*`` columns raises
    :class:`ShapeMismatchError`.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file, expected a header row") from None
        if "sample_id" not in header:
            raise ValidationError(f"{path}: missing required column 'sample_id'")
        try:
            _, cols = _task_columns(schema, header, "pred_", path)
        except ValidationError as exc:
            raise ShapeMismatchError(f"prediction shape does not match task {schema.task.value!r}: {exc}") from None
        i_sid = header.index("sample_id")
        idx = [header.index(c) for c in cols]
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            where = f"{path}:{lineno}"
            if len(row) != len(header):
                raise ValidationError(f"{where}: expected {len(header)} fields, found {len(row)}")
            label = _parse_label(schema, [row[i] for i in idx], where, predicted=True)
            records.append(PredictionRecord(row[i_sid].strip(), label))
    return records


def write_predictions(records: Sequence[PredictionRecord], schema: Schema, path: str | os.PathLike) -> Path:
    path = Path(path)
    if schema.task is TaskKind.EXPR:
        cols = ["pred_expression"]
    elif schema.task is TaskKind.VA:
        cols = ["pred_valence", "pred_arousal"]
    else:
        cols = [f"pred_au_{a}" for a in schema.au_ids]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", *cols])
        for r in records:
            if schema.task is TaskKind.EXPR:
                cells = [schema.vocabulary[r.label]]
            elif schema.task is TaskKind.VA:
                cells = [_format_float(r.label[0]), _format_float(r.label[1])]
            else:
                cells = [str(int(v)) for v in r.label]
            w.writerow([r.sample_id, *cells])
    return path


# ---------------------------------------------------------------------------
# join


@dataclasses.dataclass(frozen=True, eq=False)
class JoinedEvaluationSet:
    """Row-aligned truths, predictions and demographics for matched samples."""

    schema: Schema
    sample_ids: tuple[str, ...]
    truths: np.ndarray
    preds: np.ndarray
    age: tuple[str | None, ...]
    gender: tuple[str | None, ...]
    race: tuple[str, ...]
    missing_ids: tuple[str, ...] = ()
    ignored_predictions: int = 0

    def __len__(self) -> int:
        return len(self.sample_ids)

    @property
    def task(self) -> TaskKind:
        return self.schema.task

    @property
    def coverage(self) -> float:
        total = len(self.sample_ids) + len(self.missing_ids)
        return len(self.sample_ids) / total if total else 1.0

    def attribute(self, name: str) -> tuple:
        if name not in DEMOGRAPHIC_COLUMNS:
            raise ValueError(f"unknown demographic attribute {name!r}")
        return getattr(self, name)

    def take(self, index: np.ndarray) -> "JoinedEvaluationSet":
        index = np.asarray(index, dtype=np.int64)
        pick = lambda seq: tuple(seq[i] for i in index)  # noqa: E731
        return dataclasses.replace(
            self,
            sample_ids=pick(self.sample_ids),
            truths=self.truths[index],
            preds=self.preds[index],
            age=pick(self.age),
            gender=pick(self.gender),
            race=pick(self.race),
        )


def _check_shape(schema: Schema, label, sample_id: str) -> None:
    task = schema.task
    if task is TaskKind.EXPR:
        ok = isinstance(label, (int, np.integer)) and not isinstance(label, bool) and 0 <= label < len(schema.vocabulary)
        detail = f"expected a category index below {len(schema.vocabulary)}"
    elif task is TaskKind.AU:
        k = len(schema.au_ids or ())
        ok = (
            isinstance(label, (tuple, list, np.ndarray))
            and not isinstance(label, VaPoint)
            and len(label) == k
            and all(v in (0, 1) for v in label)
        )
        detail = f"expected {k} binary AU activations"
    else:
        ok = isinstance(label, (tuple, list, np.ndarray)) and len(label) == 2 and all(
            isinstance(v, (float, int, np.floating, np.integer)) for v in label
        )
        detail = "expected a (valence, arousal) pair"
    if not ok:
        raise ShapeMismatchError(f"prediction for {sample_id!r} has shape mismatch for task {task.value!r}: {detail}, got {label!r}")


def join_predictions(
    manifest: Manifest,
    predictions: Sequence[PredictionRecord],
    restrict_to: Iterable[str] | None = None,
) -> JoinedEvaluationSet:
    """Align predictions with manifest samples by ``sample_id``.

    ``restrict_to`` limits evaluation to a subset (e.g. the test split);
    predictions for manifest samples outside it are counted as ignored.
    """
    by_id = manifest.by_id
    seen: dict[str, PredictionRecord] = {}
    unknown = []
    dupes = []
    for rec in predictions:
        if rec.sample_id not in by_id:
            unknown.append(rec.sample_id)
            continue
        if rec.sample_id in seen:
            dupes.append(rec.sample_id)
        _check_shape(manifest.schema, rec.label, rec.sample_id)
        seen[rec.sample_id] = rec
    if unknown:
        raise ValidationError(
            f"{len(unknown)} prediction(s) reference unknown sample_id(s): " + ", ".join(sorted(unknown)[:20])
        )
    if dupes:
        raise ValidationError("duplicate prediction sample_id(s): " + ", ".join(sorted(set(dupes))[:20]))

    scope = manifest.samples
    if restrict_to is not None:
        keep = set(restrict_to)
        scope = tuple(s for s in scope if s.sample_id in keep)
    scope_ids = {s.sample_id for s in scope}
    matched = [s for s in scope if s.sample_id in seen]
    missing = tuple(s.sample_id for s in scope if s.sample_id not in seen)
    ignored = sum(1 for sid in seen if sid not in scope_ids)
    if missing:
        log.info("%d manifest sample(s) have no prediction", len(missing))
    return JoinedEvaluationSet(
        schema=manifest.schema,
        sample_ids=tuple(s.sample_id for s in matched),
        truths=labels_to_array(manifest.schema, [s.label for s in matched]),
        preds=labels_to_array(manifest.schema, [seen[s.sample_id].label for s in matched]),
        age=tuple(s.age_bin for s in matched),
        gender=tuple(s.gender for s in matched),
        race=tuple(s.race for s in matched),
        missing_ids=missing,
        ignored_predictions=ignored,
    )


def demographic_summary(manifest: Manifest) -> dict[str, Counter]:
    return {
        "age": Counter(s.age_bin for s in manifest.samples),
        "gender": Counter(s.gender for s in manifest.samples),
        "race": Counter(s.race for s in manifest.samples),
    }
