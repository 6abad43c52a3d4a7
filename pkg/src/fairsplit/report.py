"""Evaluation reports: metric bundles per model, fairness flags, rendering."""
from __future__ import annotations

import dataclasses
import json
import os
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Sequence

from . import __version__, metrics
from .domain import TaskKind
from .errors import DomainError, UndefinedMetricError, ValidationError
from .manifest import JoinedEvaluationSet

ATTRIBUTES = ("age", "gender", "race")
FAIR_THRESHOLD = 0.1
REPORT_FORMAT = "fairsplit-evaluation/1"

FAIRNESS_KIND = {TaskKind.EXPR: "SP", TaskKind.AU: "DPD", TaskKind.VA: "avgCCC"}
TEST_METRIC = {TaskKind.EXPR: "F1", TaskKind.AU: "F1", TaskKind.VA: "CCC"}
# largest attainable value; SP sums |differences| over classes and can reach 2
_FLAG_DOMAIN = {"SP": 2.0, "DPD": 1.0}


def fairness_flag(metric_kind: str, value: float) -> str:
    """``"fair"`` iff ``value <= 0.1`` (closed interval), else ``"unfair"``."""
    kind = metric_kind.upper()
    if kind not in _FLAG_DOMAIN:
        raise DomainError(f"fairness flags apply to SP and DPD, not {metric_kind!r}")
    if not 0.0 <= value <= _FLAG_DOMAIN[kind]:
        raise DomainError(f"{kind} value {value} outside [0, {_FLAG_DOMAIN[kind]:g}]")
    return "fair" if value <= FAIR_THRESHOLD else "unfair"


@dataclasses.dataclass(frozen=True)
class AttributeResult:
    fairness: float | None
    subgroup_mean: float | None
    per_subgroup: dict[str, float]
    flag: str | None = None
    notes: tuple[str, ...] = ()


@dataclasses.dataclass(frozen=True)
class EvaluationReport:
    model: str
    task: TaskKind
    test_metric: float
    attributes: dict[str, AttributeResult]
    n_evaluated: int = 0
    n_missing: int = 0
    config: dict = dataclasses.field(default_factory=dict)
    notes: tuple[str, ...] = ()

    @property
    def fairness_kind(self) -> str:
        return FAIRNESS_KIND[self.task]

    @property
    def flags(self) -> dict[str, str | None]:
        return {a: r.flag for a, r in self.attributes.items()}

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "toolkit_version": __version__,
            "model": self.model,
            "task": self.task.value,
            "test_metric_name": TEST_METRIC[self.task],
            "test_metric": self.test_metric,
            "fairness_metric_name": self.fairness_kind,
            "n_evaluated": self.n_evaluated,
            "n_missing": self.n_missing,
            "attributes": {
                name: {
                    "fairness": r.fairness,
                    "subgroup_mean": r.subgroup_mean,
                    "per_subgroup": r.per_subgroup,
                    "flag": r.flag,
                    "notes": list(r.notes),
                }
                for name, r in self.attributes.items()
            },
            "config": self.config,
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EvaluationReport":
        try:
            if doc.get("format") != REPORT_FORMAT:
                raise ValidationError(f"not a fairsplit evaluation report (format={doc.get('format')!r})")
            attrs = {
                name: AttributeResult(
                    a["fairness"], a["subgroup_mean"], dict(a["per_subgroup"]), a.get("flag"), tuple(a.get("notes", ()))
                )
                for name, a in doc["attributes"].items()
            }
            return cls(
                model=doc["model"],
                task=TaskKind(doc["task"]),
                test_metric=doc["test_metric"],
                attributes=attrs,
                n_evaluated=doc.get("n_evaluated", 0),
                n_missing=doc.get("n_missing", 0),
                config=doc.get("config", {}),
                notes=tuple(doc.get("notes", ())),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"malformed evaluation report: {exc!r}") from None


def evaluate(joined: JoinedEvaluationSet, model: str, weighted_subgroups: bool = False, config: dict | None = None) -> EvaluationReport:
    """Headline metric plus fairness and subgroup performance for each attribute."""
    if len(joined) == 0:
        raise ValidationError("nothing to evaluate: no manifest sample has a prediction")
    task = joined.task
    test = metrics.performance(joined)
    attrs = {}
    for attr in ATTRIBUTES:
        notes = []
        fairness = mean = flag = None
        per = {}
        try:
            if task is TaskKind.EXPR:
                rates = metrics.class_rates(joined, attr)
                fairness = metrics.statistical_parity(rates)
            elif task is TaskKind.AU:
                fairness = metrics.demographic_parity_difference(metrics.activation_rates(joined, attr))
            else:
                table = metrics.subgroup_ccc_table(joined, attr)
                if table.excluded:
                    notes.append("excluded (< 2 samples): " + ", ".join(table.excluded))
                fairness = metrics.average_ccc_subgroups(table)
                mean = fairness
                per = {
                    g: (float(v) + float(a)) / 2 for g, v, a in zip(table.subgroups, table.ccc_valence, table.ccc_arousal)
                }
        except UndefinedMetricError as exc:
            notes.append(str(exc))
        if task is not TaskKind.VA:
            try:
                sub = metrics.subgroup_f1(joined, attr, weighted=weighted_subgroups)
                mean, per = sub.mean, dict(sub.scores)
                if sub.excluded:
                    notes.append("no defined F1 for: " + ", ".join(sub.excluded))
            except UndefinedMetricError as exc:
                notes.append(str(exc))
            if fairness is not None:
                flag = fairness_flag(FAIRNESS_KIND[task], fairness)
        attrs[attr] = AttributeResult(fairness, mean, per, flag, tuple(notes))
    report_notes = []
    if joined.missing_ids:
        report_notes.append(f"{len(joined.missing_ids)} sample(s) without prediction were skipped")
    return EvaluationReport(
        model=model,
        task=task,
        test_metric=test,
        attributes=attrs,
        n_evaluated=len(joined),
        n_missing=len(joined.missing_ids),
        config=dict(config or {}),
        notes=tuple(report_notes),
    )


# ---------------------------------------------------------------------------
# rendering


def percent(value: float | None) -> str:
    """Fraction -> percent text with one decimal, rounding half up."""
    if value is None:
        return "-"
    d = (Decimal(repr(float(value))) * 100).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)
    if d == 0:
        d = abs(d)
    return str(d)


def _columns(task: TaskKind) -> list[tuple[str, str]]:
    if task is TaskKind.VA:
        return [("Test", "CCC")] + [(a.capitalize(), "avgCCC") for a in ATTRIBUTES]
    kind = FAIRNESS_KIND[task]
    cols = [("Test", "F1")]
    for a in ATTRIBUTES:
        cols += [(a.capitalize(), kind), (a.capitalize(), "F1")]
    return cols


def _row(report: EvaluationReport) -> list[str]:
    cells = [report.model, percent(report.test_metric)]
    for a in ATTRIBUTES:
        r = report.attributes.get(a)
        if report.task is TaskKind.VA:
            cells.append(percent(r.fairness if r else None))
        else:
            cells += [percent(r.fairness if r else None), percent(r.subgroup_mean if r else None)]
    if report.task is not TaskKind.VA:
        cells.append("/".join((report.attributes[a].flag or "-") if a in report.attributes else "-" for a in ATTRIBUTES))
    return cells


def render_report(reports: Sequence[EvaluationReport], format: str = "table") -> str:
    """Render one row per model, columns laid out as Test then (fairness, F1) per attribute.

    ``format`` is ``"table"`` (aligned text, percentages) or ``"json"``
    (full precision).
    """
    if not reports:
        raise ValidationError("render_report needs at least one report")
    tasks = {r.task for r in reports}
    if len(tasks) > 1:
        raise ValidationError("cannot put mixed task kinds in one table: " + ", ".join(sorted(t.value for t in tasks)))
    fmt = format.lower()
    if fmt in ("json", "json-like", "machine"):
        doc = {"format": "fairsplit-report-set/1", "toolkit_version": __version__, "reports": [r.to_dict() for r in reports]}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if fmt not in ("table", "text", "tabular"):
        raise ValidationError(f"unknown report format {format!r}")

    task = reports[0].task
    top = ["Model"] + [c[0] for c in _columns(task)]
    sub = [""] + [c[1] for c in _columns(task)]
    if task is not TaskKind.VA:
        top.append("Flags")
        sub.append("A/G/R")
    rows = [_row(r) for r in reports]
    widths = [max(len(line[i]) for line in [top, sub, *rows]) for i in range(len(top))]

    def fmt_line(cells, numeric):
        out = []
        for i, (cell, w) in enumerate(zip(cells, widths)):
            right = numeric and 0 < i < len(cells) - (0 if task is TaskKind.VA else 1)
            out.append(cell.rjust(w) if right else cell.ljust(w))
        return " | ".join(out).rstrip()

    kind = FAIRNESS_KIND[task]
    if task is TaskKind.VA:
        legend = "# values in %; avgCCC = subgroup-averaged valence/arousal CCC"
    else:
        legend = f"# values in %; {kind} in [0, {percent(FAIR_THRESHOLD)}] flags a fair model"
    lines = [legend, fmt_line(top, False), fmt_line(sub, False)]
    lines.append("-+-".join("-" * w for w in widths))
    lines += [fmt_line(r, True) for r in rows]
    return "\n".join(lines) + "\n"


def parse_table(text: str) -> list[list[str]]:
    """Split the data rows of a rendered table back into cells."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    body = lines[3:]
    return [[c.strip() for c in ln.split("|")] for ln in body]


def write_report(report: EvaluationReport, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_report(path: str | os.PathLike) -> list[EvaluationReport]:
    """Load a single evaluation document or a rendered JSON report set."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from None
    if isinstance(doc, dict) and "reports" in doc:
        return [EvaluationReport.from_dict(d) for d in doc["reports"]]
    return [EvaluationReport.from_dict(doc)]
