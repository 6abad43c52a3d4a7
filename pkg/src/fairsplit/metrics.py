"""Performance and fairness measures for expression, AU and VA evaluation.

Performance: macro F1 over expression categories, mean binary F1 over AUs,
CCC and the valence/arousal mean CCC.  Fairness per demographic attribute:
statistical parity (SP) over predicted-class rates, demographic parity
difference (DPD) over predicted AU activation rates, and the subgroup
average CCC.  Fractions are returned on their natural scale ([0, 1] or
[-1, 1]); percentages are a report concern.
"""
from __future__ import annotations

import dataclasses
from typing import Sequence

import numpy as np

from .domain import NON_SUBGROUP_VALUES, TaskKind, age_label_sort_key
from .errors import ShapeMismatchError, UndefinedMetricError, ValidationError
from .manifest import JoinedEvaluationSet


# ---------------------------------------------------------------------------
# subgroup containers


@dataclasses.dataclass(frozen=True, eq=False)
class SubgroupClassRates:
    """``rates[i, c]`` = share of subgroup ``i`` samples predicted as class ``c``."""

    attribute: str
    subgroups: tuple[str, ...]
    sizes: np.ndarray
    rates: np.ndarray
    excluded: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return len(self.subgroups)

    @property
    def k(self) -> int:
        return self.rates.shape[1]

    @classmethod
    def from_counts(cls, attribute: str, subgroups: Sequence[str], counts) -> "SubgroupClassRates":
        """Rates from a (subgroup x class) prediction count table; empty rows are dropped."""
        counts = np.asarray(counts, dtype=np.float64)
        sizes = counts.sum(axis=1)
        keep = sizes > 0
        excluded = tuple(str(s) for s, k in zip(subgroups, keep) if not k)
        rates = counts[keep] / sizes[keep, None]
        return cls(attribute, tuple(s for s, k in zip(subgroups, keep) if k), sizes[keep].astype(np.int64), rates, excluded)


@dataclasses.dataclass(frozen=True, eq=False)
class SubgroupActivationRates:
    """``rates[i, c]`` = share of subgroup ``i`` samples with AU ``c`` predicted active."""

    attribute: str
    subgroups: tuple[str, ...]
    sizes: np.ndarray
    rates: np.ndarray
    excluded: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return len(self.subgroups)

    @property
    def k(self) -> int:
        return self.rates.shape[1]


@dataclasses.dataclass(frozen=True)
class MomentSummary:
    mean_x: float
    mean_y: float
    var_x: float
    var_y: float
    cov_xy: float
    count: int


@dataclasses.dataclass(frozen=True, eq=False)
class SubgroupCccTable:
    attribute: str
    subgroups: tuple[str, ...]
    ccc_valence: np.ndarray
    ccc_arousal: np.ndarray
    excluded: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return len(self.subgroups)


@dataclasses.dataclass(frozen=True)
class SubgroupF1:
    attribute: str
    scores: dict[str, float]
    sizes: dict[str, int]
    mean: float
    excluded: tuple[str, ...] = ()


# ---------------------------------------------------------------------------
# performance


def f1_macro(truths: Sequence[int], preds: Sequence[int], k: int | None = None) -> float:
    """Unweighted mean of per-category F1.

    Categories absent from both truths and predictions are left out of the
    mean; a category that is present but never correctly predicted scores 0.
    """
    t = np.asarray(truths, dtype=np.int64).ravel()
    p = np.asarray(preds, dtype=np.int64).ravel()
    if t.shape != p.shape:
        raise ShapeMismatchError(f"truths and predictions differ in length ({t.size} vs {p.size})")
    if t.size == 0:
        raise ValidationError("f1_macro needs at least one sample")
    if k is None:
        k = int(max(t.max(), p.max())) + 1
    if t.min() < 0 or p.min() < 0 or t.max() >= k or p.max() >= k:
        raise ValidationError(f"category indices must lie in 0..{k - 1}")
    tp = np.bincount(t[t == p], minlength=k)
    support = np.bincount(t, minlength=k) + np.bincount(p, minlength=k)
    present = support > 0
    return float(np.mean(2.0 * tp[present] / support[present]))


def f1_binary_multilabel(truths, preds) -> float:
    """Mean over AUs of the positive-class F1; AUs never positive in either input are skipped."""
    t = np.asarray(truths, dtype=np.int64)
    p = np.asarray(preds, dtype=np.int64)
    if t.ndim == 1:
        t = t[:, None]
    if p.ndim == 1:
        p = p[:, None]
    if t.shape != p.shape:
        raise ShapeMismatchError(f"truth shape {t.shape} does not match prediction shape {p.shape}")
    if t.shape[0] == 0:
        raise ValidationError("f1_binary_multilabel needs at least one sample")
    if not (np.isin(t, (0, 1)).all() and np.isin(p, (0, 1)).all()):
        raise ValidationError("AU activations must be 0 or 1")
    tp = (t & p).sum(axis=0)
    support = t.sum(axis=0) + p.sum(axis=0)
    present = support > 0
    if not present.any():
        raise UndefinedMetricError("no AU is active in either truths or predictions")
    return float(np.mean(2.0 * tp[present] / support[present]))


def moments(annotations, predictions) -> MomentSummary:
    x = np.asarray(annotations, dtype=np.float64).ravel()
    y = np.asarray(predictions, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ShapeMismatchError(f"annotations and predictions differ in length ({x.size} vs {y.size})")
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    return MomentSummary(float(mx), float(my), float(np.mean(dx * dx)), float(np.mean(dy * dy)), float(np.mean(dx * dy)), x.size)


def ccc(annotations, predictions) -> float:
    """Concordance correlation coefficient with population (1/N) moments.

    Two constant, equal sequences agree perfectly and give 1.0.
    """
    if len(annotations) < 2 or len(annotations) != len(predictions):
        raise ValidationError("ccc needs two sequences of equal length >= 2")
    m = moments(annotations, predictions)
    denom = m.var_x + m.var_y + (m.mean_x - m.mean_y) ** 2
    if denom == 0.0:
        return 1.0
    return float(np.clip(2.0 * m.cov_xy / denom, -1.0, 1.0))


def mean_va_ccc(joined: JoinedEvaluationSet) -> float:
    _require_task(joined, TaskKind.VA)
    return (ccc(joined.truths[:, 0], joined.preds[:, 0]) + ccc(joined.truths[:, 1], joined.preds[:, 1])) / 2.0


# ---------------------------------------------------------------------------
# fairness


def statistical_parity(rates: SubgroupClassRates) -> float:
    """Average over subgroup pairs of the summed absolute class-rate differences."""
    n = rates.n
    if n < 2:
        raise UndefinedMetricError(f"statistical parity needs >= 2 subgroups of {rates.attribute!r}, got {n}")
    r = rates.rates
    pair = np.abs(r[:, None, :] - r[None, :, :]).sum(axis=2)
    i, j = np.triu_indices(n, k=1)
    return float(2.0 * pair[i, j].sum() / (n * (n - 1)))


def demographic_parity_difference(rates: SubgroupActivationRates) -> float:
    """Mean over AUs of (max - min) predicted activation rate across subgroups."""
    if rates.n < 2:
        raise UndefinedMetricError(f"DPD needs >= 2 subgroups of {rates.attribute!r}, got {rates.n}")
    if rates.k < 1:
        raise UndefinedMetricError("DPD needs at least one AU")
    r = rates.rates
    return float(np.mean(r.max(axis=0) - r.min(axis=0)))


def average_ccc_subgroups(table: SubgroupCccTable) -> float:
    if table.n < 1:
        raise UndefinedMetricError(f"no subgroup of {table.attribute!r} has the 2 samples CCC needs")
    return float((table.ccc_valence.sum() + table.ccc_arousal.sum()) / (2 * table.n))


# ---------------------------------------------------------------------------
# building subgroup tables from a joined evaluation set


def _require_task(joined: JoinedEvaluationSet, *tasks: TaskKind) -> None:
    if joined.task not in tasks:
        raise ValidationError(f"operation needs task {'/'.join(t.value for t in tasks)}, got {joined.task.value}")


def _subgroup_order(attribute: str, values) -> list[str]:
    if attribute == "age":
        return sorted(values, key=age_label_sort_key)
    return sorted(values)


def subgroup_indices(joined: JoinedEvaluationSet, attribute: str) -> dict[str, np.ndarray]:
    """Row indices per labeled subgroup; unlabeled values are never a subgroup."""
    values = joined.attribute(attribute)
    skip = NON_SUBGROUP_VALUES[attribute]
    buckets: dict[str, list[int]] = {}
    for i, v in enumerate(values):
        if v not in skip:
            buckets.setdefault(v, []).append(i)
    return {g: np.asarray(buckets[g], dtype=np.int64) for g in _subgroup_order(attribute, buckets)}


def class_rates(joined: JoinedEvaluationSet, attribute: str) -> SubgroupClassRates:
    _require_task(joined, TaskKind.EXPR)
    k = len(joined.schema.vocabulary)
    groups = subgroup_indices(joined, attribute)
    counts = np.zeros((len(groups), k))
    for row, idx in enumerate(groups.values()):
        counts[row] = np.bincount(joined.preds[idx], minlength=k)
    return SubgroupClassRates.from_counts(attribute, list(groups), counts)


def activation_rates(joined: JoinedEvaluationSet, attribute: str) -> SubgroupActivationRates:
    _require_task(joined, TaskKind.AU)
    groups = subgroup_indices(joined, attribute)
    k = joined.preds.shape[1]
    rates = np.zeros((len(groups), k))
    sizes = np.zeros(len(groups), dtype=np.int64)
    for row, idx in enumerate(groups.values()):
        rates[row] = joined.preds[idx].mean(axis=0)
        sizes[row] = idx.size
    return SubgroupActivationRates(attribute, tuple(groups), sizes, rates)


def subgroup_ccc_table(joined: JoinedEvaluationSet, attribute: str) -> SubgroupCccTable:
    """Per-subgroup valence and arousal CCC; subgroups under 2 samples are excluded."""
    _require_task(joined, TaskKind.VA)
    names, cv, ca, excluded = [], [], [], []
    for g, idx in subgroup_indices(joined, attribute).items():
        if idx.size < 2:
            excluded.append(g)
            continue
        names.append(g)
        cv.append(ccc(joined.truths[idx, 0], joined.preds[idx, 0]))
        ca.append(ccc(joined.truths[idx, 1], joined.preds[idx, 1]))
    return SubgroupCccTable(attribute, tuple(names), np.asarray(cv), np.asarray(ca), tuple(excluded))


def performance(joined: JoinedEvaluationSet) -> float:
    """The task's headline test metric."""
    if joined.task is TaskKind.EXPR:
        return f1_macro(joined.truths, joined.preds, len(joined.schema.vocabulary))
    if joined.task is TaskKind.AU:
        return f1_binary_multilabel(joined.truths, joined.preds)
    return mean_va_ccc(joined)


def subgroup_f1(joined: JoinedEvaluationSet, attribute: str, weighted: bool = False) -> SubgroupF1:
    """F1 within each labeled subgroup and their mean (unweighted unless ``weighted``)."""
    _require_task(joined, TaskKind.EXPR, TaskKind.AU)
    scores, sizes, excluded = {}, {}, []
    for g, idx in subgroup_indices(joined, attribute).items():
        part = joined.take(idx)
        try:
            scores[g] = performance(part)
        except UndefinedMetricError:
            excluded.append(g)
            continue
        sizes[g] = int(idx.size)
    if not scores:
        raise UndefinedMetricError(f"attribute {attribute!r} has no labeled subgroup with a defined F1")
    vals = np.array(list(scores.values()))
    if weighted:
        w = np.array([sizes[g] for g in scores], dtype=np.float64)
        mean = float(np.sum(vals * w) / w.sum())
    else:
        mean = float(np.mean(vals))
    return SubgroupF1(attribute, scores, sizes, mean, tuple(excluded))
