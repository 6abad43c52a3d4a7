"""Label harmonisation and dual-rater demographic consolidation."""
from __future__ import annotations

import csv
import dataclasses
import os
from pathlib import Path
from typing import Mapping

from .domain import AgeBin, TaskKind, age_bin_of, parse_age, parse_gender, parse_race
from .errors import DomainError, ValidationError
from .manifest import Manifest, VaPoint

DEMOGRAPHIC_FIELDS = ("age", "gender", "race")


def rescale_va(value: float, source_range: tuple[float, float] = (-10.0, 10.0)) -> float:
    """Affinely map ``value`` from ``source_range`` onto [-1, 1].

    Endpoints map exactly to -1.0 and 1.0.
    """
    lo, hi = float(source_range[0]), float(source_range[1])
    if not lo < hi:
        raise DomainError(f"source range must satisfy lo < hi, got [{lo}, {hi}]")
    if not lo <= value <= hi:
        raise DomainError(f"value {value} outside source range [{lo}, {hi}]")
    if value == lo:
        return -1.0
    if value == hi:
        return 1.0
    return 2.0 * (value - lo) / (hi - lo) - 1.0


def binarize_au(intensity: int, threshold: int = 0) -> int:
    """AU activation from a 0-5 intensity: active iff ``intensity > threshold``.

    The protocol uses ``threshold=0``; ``threshold=1`` reproduces the stricter
    convention some DISFA works use and must be requested explicitly.
    """
    if isinstance(intensity, bool) or int(intensity) != intensity or not 0 <= intensity <= 5:
        raise DomainError(f"AU intensity must be an integer in 0..5, got {intensity!r}")
    if threshold not in (0, 1):
        raise DomainError(f"activation threshold must be 0 or 1, got {threshold!r}")
    return 1 if intensity > threshold else 0


def bin_age(years: int) -> AgeBin:
    if isinstance(years, bool) or int(years) != years:
        raise DomainError(f"age must be an integer number of years, got {years!r}")
    if years < 0:
        raise DomainError(f"age must be non-negative, got {years}")
    return age_bin_of(int(years))


def normalize_manifest(
    manifest: Manifest,
    va_range: tuple[float, float] | None = None,
    au_threshold: int = 0,
) -> Manifest:
    """Bring a loaded manifest into the consistent annotation form.

    AU intensities are binarized at ``au_threshold`` (the default is
    idempotent on already-binary labels); VA labels are rescaled from
    ``va_range`` when given and must end up inside [-1, 1].
    """
    task = manifest.task
    if task is TaskKind.EXPR:
        return manifest
    out = []
    for s in manifest.samples:
        if task is TaskKind.AU:
            label = tuple(binarize_au(v, au_threshold) for v in s.label)
        else:
            v, a = s.label
            if va_range is not None:
                v, a = rescale_va(v, va_range), rescale_va(a, va_range)
            if not (-1.0 <= v <= 1.0 and -1.0 <= a <= 1.0):
                raise ValidationError(
                    f"sample {s.sample_id!r}: VA point ({v}, {a}) outside [-1, 1]; pass the source range to rescale"
                )
            label = VaPoint(float(v), float(a))
        out.append(dataclasses.replace(s, label=label))
    return dataclasses.replace(manifest, samples=tuple(out))


# ---------------------------------------------------------------------------
# rater consolidation


@dataclasses.dataclass(frozen=True)
class RaterFilePair:
    """Two demographic annotation tables, ``sample_id -> {field: value}``."""

    rater_a: Mapping[str, Mapping[str, str | None]]
    rater_b: Mapping[str, Mapping[str, str | None]]


@dataclasses.dataclass(frozen=True)
class Disagreement:
    sample_id: str
    field: str
    rater_a: str | None
    rater_b: str | None


@dataclasses.dataclass(frozen=True)
class ConsolidationResult:
    # consensus[sample_id][field] is present only when both raters agree
    consensus: dict[str, dict[str, str | None]]
    disagreements: tuple[Disagreement, ...]

    def swapped(self) -> "ConsolidationResult":
        return ConsolidationResult(
            self.consensus,
            tuple(Disagreement(d.sample_id, d.field, d.rater_b, d.rater_a) for d in self.disagreements),
        )


def consolidate_annotations(pair: RaterFilePair) -> ConsolidationResult:
    """Per-field consensus between two raters.

    A field enters the consensus when both raters gave the same value and is
    listed as a disagreement otherwise; fields are judged independently, so a
    record can contribute its agreed age while its gender is disputed.
    """
    ids_a, ids_b = set(pair.rater_a), set(pair.rater_b)
    if ids_a != ids_b:
        only = sorted(ids_a ^ ids_b)
        raise ValidationError(
            f"rater tables cover different sample_id sets; {len(only)} id(s) in one table only: "
            + ", ".join(only[:20])
            + (" ..." if len(only) > 20 else "")
        )
    consensus: dict[str, dict[str, str | None]] = {}
    disagreements = []
    for sid in sorted(ids_a):
        row_a, row_b = pair.rater_a[sid], pair.rater_b[sid]
        agreed = {}
        for field in DEMOGRAPHIC_FIELDS:
            va, vb = row_a.get(field), row_b.get(field)
            if va == vb:
                agreed[field] = va
            else:
                disagreements.append(Disagreement(sid, field, va, vb))
        consensus[sid] = agreed
    return ConsolidationResult(consensus, tuple(disagreements))


def read_rater_file(path: str | os.PathLike) -> dict[str, dict[str, str | None]]:
    """Load one rater table in the manifest demographic column format."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file, expected a header row") from None
        for col in ("sample_id", *DEMOGRAPHIC_FIELDS):
            if col not in header:
                raise ValidationError(f"{path}: missing required column {col!r}")
        idx = {name: header.index(name) for name in ("sample_id", *DEMOGRAPHIC_FIELDS)}
        table: dict[str, dict[str, str | None]] = {}
        dupes = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValidationError(
                    f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}"
                )
            sid = row[idx["sample_id"]].strip()
            if not sid:
                raise ValidationError(f"{path}:{lineno}: empty sample_id")
            if sid in table:
                dupes.append(sid)
            table[sid] = {
                "age": parse_age(row[idx["age"]])[0],
                "gender": parse_gender(row[idx["gender"]])[0],
                "race": parse_race(row[idx["race"]])[0],
            }
    if dupes:
        raise ValidationError(f"{path}: duplicate sample_id(s): " + ", ".join(sorted(set(dupes))))
    return table


def write_consolidation(result: ConsolidationResult, out_dir: str | os.PathLike) -> tuple[Path, Path]:
    """Write ``consensus.csv`` and ``disagreements.csv``; returns both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cons_path = out_dir / "consensus.csv"
    dis_path = out_dir / "disagreements.csv"
    with cons_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", *DEMOGRAPHIC_FIELDS])
        for sid in sorted(result.consensus):
            agreed = result.consensus[sid]
            w.writerow([sid, *(_cell(agreed.get(f)) if f in agreed else "" for f in DEMOGRAPHIC_FIELDS)])
    with dis_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "field", "rater_a", "rater_b"])
        for d in result.disagreements:
            w.writerow([d.sample_id, d.field, _cell(d.rater_a), _cell(d.rater_b)])
    return cons_path, dis_path


def _cell(value: str | None) -> str:
    return "Unlabeled" if value is None else value
