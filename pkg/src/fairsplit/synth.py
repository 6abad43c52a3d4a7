"""Synthetic manifests with controlled marginals, plus brute-force oracles.

The oracles are deliberately independent of the code they check:
``oracle_partition`` enumerates every assignment with its own vectorised
objective, and ``reference_metrics`` re-derives every measure with plain
Python loops (no numpy, nothing imported from :mod:`fairsplit.metrics`).
"""
from __future__ import annotations

import dataclasses
import itertools
import math
import os
from typing import Mapping, Sequence

import numpy as np

from . import _kernels
from .domain import DEFAULT_EXPRESSIONS, TaskKind
from .errors import FairsplitError, UndefinedMetricError, ValidationError
from .kvfile import read_kv
from .manifest import JoinedEvaluationSet, Manifest, Sample, Schema, VaPoint
from .partition import (
    SET_NAMES,
    BalanceProblem,
    PartitionAssignment,
    PartitionConfig,
    SubjectGroup,
    _statistics,
)

# New-partition counts (train, valid, test) of the AffectNet expression set.
AFFECTNET_NEW_PARTITION = {
    "expression": {
        "Neutral": (41252, 11223, 22588),
        "Happiness": (73958, 20144, 40432),
        "Sadness": (14174, 3842, 7816),
        "Surprise": (7951, 2148, 4425),
        "Fear": (3729, 997, 2113),
        "Disgust": (2318, 611, 1355),
        "Anger": (13859, 3755, 7649),
        "Contempt": (2299, 610, 1332),
    },
    "gender": {
        "Female": (80281, 21808, 44127),
        "Male": (79259, 21522, 43583),
    },
    "race": {
        "Asian": (14168, 3823, 7893),
        "Black": (13072, 3518, 7309),
        "Indian": (9526, 2552, 5357),
        "White": (122774, 33437, 67151),
    },
    "age": {
        "0-2": (8607, 2327, 4772),
        "3-9": (9895, 2684, 5472),
        "10-19": (8337, 2249, 4633),
        "20-29": (65624, 17881, 35873),
        "30-39": (31476, 8564, 17243),
        "40-49": (15758, 4272, 8677),
        "50-59": (12790, 3467, 7056),
        "60-69": (5227, 1407, 2923),
        "70+": (1826, 479, 1061),
    },
}
AFFECTNET_SET_TOTALS = (159540, 43330, 87710)


class OracleTooLargeError(FairsplitError, ValueError):
    pass


ORACLE_MAX_GROUPS = 13


@dataclasses.dataclass(frozen=True)
class VaComponent:
    weight: float
    mean: tuple[float, float]
    sd: tuple[float, float]


@dataclasses.dataclass(frozen=True)
class SynthSpec:
    n_samples: int
    task: TaskKind = TaskKind.EXPR
    label_dist: Mapping[str, float] | None = None  # expression name -> p
    au_rates: Mapping[str, float] | None = None  # AU id -> activation rate
    va_components: tuple[VaComponent, ...] = ()
    age_dist: Mapping[str, float] = dataclasses.field(default_factory=lambda: {"20-29": 1.0})
    gender_dist: Mapping[str, float] = dataclasses.field(default_factory=lambda: {"Female": 0.5, "Male": 0.5})
    race_dist: Mapping[str, float] = dataclasses.field(default_factory=lambda: {"White": 1.0})
    group_sizes: Mapping[int, float] = dataclasses.field(default_factory=lambda: {1: 1.0})
    seed: int = 0
    vocabulary: tuple[str, ...] = DEFAULT_EXPRESSIONS
    au_intensity: bool = False  # emit 1..5 intensities for active AUs
    # optional label correlation: race -> expression distribution
    label_given_race: Mapping[str, Mapping[str, float]] | None = None

    def __post_init__(self):
        object.__setattr__(self, "task", TaskKind(self.task))
        if int(self.n_samples) < 0:
            raise ValidationError("n_samples must be non-negative")
        task = self.task
        if task is TaskKind.EXPR:
            if not self.label_dist:
                raise ValidationError("expression spec needs label_dist")
            unknown = set(self.label_dist) - set(self.vocabulary)
            if unknown:
                raise ValidationError(f"label_dist categories not in vocabulary: {sorted(unknown)}")
            _check_dist("label_dist", self.label_dist)
            for race, dist in (self.label_given_race or {}).items():
                _check_dist(f"label_given_race[{race}]", dist)
        elif task is TaskKind.AU:
            if not self.au_rates:
                raise ValidationError("AU spec needs au_rates")
            for au, r in self.au_rates.items():
                if not 0.0 <= float(r) <= 1.0:
                    raise ValidationError(f"AU {au} rate {r} outside [0, 1]")
        else:
            if not self.va_components:
                raise ValidationError("VA spec needs at least one mixture component")
            _check_dist("va_components", {i: c.weight for i, c in enumerate(self.va_components)})
            for c in self.va_components:
                if min(c.sd) <= 0:
                    raise ValidationError("VA component standard deviations must be positive")
        for name in ("age_dist", "gender_dist", "race_dist"):
            _check_dist(name, getattr(self, name))
        _check_dist("group_sizes", self.group_sizes)
        if any(int(k) < 1 for k in self.group_sizes):
            raise ValidationError("group sizes must be >= 1")


def _check_dist(name: str, dist: Mapping) -> None:
    if not dist:
        raise ValidationError(f"{name} is empty")
    probs = [float(p) for p in dist.values()]
    if any(p < 0 or not math.isfinite(p) for p in probs):
        raise ValidationError(f"{name} has a negative or non-finite probability")
    if abs(sum(probs) - 1.0) > 1e-9:
        raise ValidationError(f"{name} must sum to 1 (got {sum(probs)!r})")


def _draw(rng: np.random.Generator, dist: Mapping, size: int) -> list:
    keys = list(dist)
    p = np.array([float(dist[k]) for k in keys])
    idx = rng.choice(len(keys), size=size, p=p / p.sum())
    return [keys[i] for i in idx]


def generate_manifest(spec: SynthSpec) -> Manifest:
    """Sample a manifest; attributes are independent draws from the spec marginals.

    Demographics are drawn once per subject and shared by its samples.
    Deterministic for a given seed.
    """
    rng = np.random.default_rng(spec.seed)
    n = int(spec.n_samples)
    # subject sizes first, then fill samples in order
    sizes = []
    while sum(sizes) < n:
        sizes.extend(int(s) for s in _draw(rng, spec.group_sizes, max(16, n - sum(sizes))))
    group_of = np.repeat(np.arange(len(sizes)), sizes)[:n]
    n_groups = int(group_of[-1]) + 1 if n else 0
    singletons = max(int(k) for k in spec.group_sizes) == 1

    ages = _draw(rng, spec.age_dist, n_groups)
    genders = _draw(rng, spec.gender_dist, n_groups)
    races = _draw(rng, spec.race_dist, n_groups)

    task = spec.task
    if task is TaskKind.EXPR:
        vocab = list(spec.vocabulary)
        if spec.label_given_race:
            labels = [None] * n
            sample_race = [races[g] for g in group_of]
            for race in sorted(set(sample_race)):
                idx = [i for i, r in enumerate(sample_race) if r == race]
                dist = spec.label_given_race.get(race, spec.label_dist)
                for i, name in zip(idx, _draw(rng, dist, len(idx))):
                    labels[i] = vocab.index(name)
        else:
            labels = [vocab.index(name) for name in _draw(rng, spec.label_dist, n)]
        schema = Schema(task, vocabulary=spec.vocabulary)
    elif task is TaskKind.AU:
        au_ids = tuple(str(a) for a in spec.au_rates)
        rates = np.array([float(spec.au_rates[a]) for a in spec.au_rates])
        active = (rng.random((n, len(au_ids))) < rates).astype(np.int64)
        if spec.au_intensity:
            active = active * rng.integers(1, 6, size=active.shape)
        labels = [tuple(int(v) for v in row) for row in active]
        schema = Schema(task, au_ids=au_ids, vocabulary=spec.vocabulary)
    else:
        comps = spec.va_components
        which = rng.choice(len(comps), size=n, p=np.array([c.weight for c in comps]) / sum(c.weight for c in comps))
        mean = np.array([c.mean for c in comps])[which]
        sd = np.array([c.sd for c in comps])[which]
        pts = np.clip(mean + sd * rng.standard_normal((n, 2)), -1.0, 1.0)
        labels = [VaPoint(float(v), float(a)) for v, a in pts]
        schema = Schema(task, vocabulary=spec.vocabulary)

    width = max(6, len(str(n)))
    samples = tuple(
        Sample(
            sample_id=f"img{i:0{width}d}",
            subject_id=None if singletons else f"subj{int(group_of[i]):0{width}d}",
            label=labels[i],
            age_bin=ages[group_of[i]],
            gender=genders[group_of[i]],
            race=races[group_of[i]],
        )
        for i in range(n)
    )
    return Manifest(schema, samples, source=f"synthetic(seed={spec.seed})")


def affectnet_like_spec(n_samples: int = 290_580, seed: int = 0) -> SynthSpec:
    """Expression spec whose marginals are the AffectNet new-partition totals."""
    def dist(table):
        totals = {k: sum(v) for k, v in table.items()}
        grand = sum(totals.values())
        return {k: t / grand for k, t in totals.items()}

    return SynthSpec(
        n_samples=n_samples,
        task=TaskKind.EXPR,
        label_dist=dist(AFFECTNET_NEW_PARTITION["expression"]),
        age_dist=dist(AFFECTNET_NEW_PARTITION["age"]),
        gender_dist=dist(AFFECTNET_NEW_PARTITION["gender"]),
        race_dist=dist(AFFECTNET_NEW_PARTITION["race"]),
        seed=seed,
    )


def _parse_dist(text: str, key_type=str) -> dict:
    out = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        name, _, value = part.rpartition(":")
        if not name:
            raise ValidationError(f"expected name:probability, got {part!r}")
        out[key_type(name.strip())] = float(value)
    return out


def load_synth_spec(path: str | os.PathLike) -> SynthSpec:
    """Read a flat key-value SynthSpec file.

    Keys: ``n_samples``, ``task``, ``seed``, ``label``/``age``/``gender``/
    ``race``/``group_sizes`` as ``name:p,name:p``, ``au_rates`` as
    ``id:rate,...``, ``va_components`` as ``w mv ma sv sa; ...``,
    ``vocabulary`` as a comma list, ``au_intensity`` as true/false.
    """
    items = read_kv(path)
    kwargs: dict = {}
    try:
        for key, value in items.items():
            if key == "n_samples":
                kwargs["n_samples"] = int(value)
            elif key == "seed":
                kwargs["seed"] = int(value, 0)
            elif key == "task":
                kwargs["task"] = TaskKind.parse(value)
            elif key == "label":
                kwargs["label_dist"] = _parse_dist(value)
            elif key in ("age", "gender", "race"):
                kwargs[f"{key}_dist"] = _parse_dist(value)
            elif key == "group_sizes":
                kwargs["group_sizes"] = _parse_dist(value, int)
            elif key == "au_rates":
                kwargs["au_rates"] = _parse_dist(value)
            elif key == "vocabulary":
                kwargs["vocabulary"] = tuple(v.strip() for v in value.split(",") if v.strip())
            elif key == "au_intensity":
                kwargs["au_intensity"] = value.strip().lower() in ("1", "true", "yes")
            elif key == "va_components":
                comps = []
                for chunk in value.split(";"):
                    if chunk.strip():
                        w, mv, ma, sv, sa = (float(x) for x in chunk.split())
                        comps.append(VaComponent(w, (mv, ma), (sv, sa)))
                kwargs["va_components"] = tuple(comps)
            else:
                raise ValidationError(f"{path}: unknown SynthSpec key {key!r}")
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"{path}: {exc}") from None
    if "n_samples" not in kwargs:
        raise ValidationError(f"{path}: n_samples is required")
    return SynthSpec(**kwargs)


_RACES = ("Asian", "Black", "Indian", "White", "Unlabeled")
_GENDERS = ("Female", "Male", "OtherUncertain", None)
_AGES = ("0-2", "3-9", "10-19", "20-29", "30-39", "40-49", "50-59", "60-69", "70+", None)


def random_manifest(seed: int, n_groups: int, task: TaskKind = TaskKind.EXPR, max_group_size: int = 30,
                    n_aus: int = 4, vocabulary: tuple[str, ...] = DEFAULT_EXPRESSIONS[:7]) -> Manifest:
    """Small unstructured manifest with exactly ``n_groups`` subjects.

    Subject sizes are uniform on 1..max_group_size and every attribute,
    including unlabeled values, is drawn uniformly; meant for property tests.
    """
    rng = np.random.default_rng(seed)
    task = TaskKind(task)
    au_ids = tuple(str(i + 1) for i in range(n_aus))
    schema = Schema(task, au_ids=au_ids if task is TaskKind.AU else None, vocabulary=vocabulary)
    samples = []
    for g in range(n_groups):
        size = int(rng.integers(1, max_group_size + 1))
        age = _AGES[rng.integers(len(_AGES))]
        gender = _GENDERS[rng.integers(len(_GENDERS))]
        race = _RACES[rng.integers(len(_RACES))]
        for _ in range(size):
            if task is TaskKind.EXPR:
                label = int(rng.integers(len(vocabulary)))
            elif task is TaskKind.AU:
                label = tuple(int(v) for v in rng.integers(0, 2, n_aus))
            else:
                label = VaPoint(*(float(v) for v in rng.uniform(-1, 1, 2)))
            samples.append(Sample(f"s{len(samples):05d}", f"p{g:03d}", label, age, gender, race))
    return Manifest(schema, tuple(samples), source=f"random(seed={seed})")


# ---------------------------------------------------------------------------
# partition oracle


def _vector_objective(sets: np.ndarray, problem: BalanceProblem) -> np.ndarray:
    """Objective of many assignments at once (rows of ``sets``), written from the formula."""
    total = problem.total
    out = np.zeros(sets.shape[0])
    for s in range(3):
        member = (sets == s).astype(np.float64)
        n_s = member @ problem.gsize.astype(np.float64)
        counts = member @ problem.gcounts.astype(np.float64)
        size_term = problem.w_size * np.abs(n_s / total - problem.targets[s])
        marg = np.zeros(sets.shape[0])
        safe = np.where(n_s > 0, n_s, 1.0)
        for d in range(problem.dim_w.shape[0]):
            lo, hi = problem.dim_start[d], problem.dim_start[d + 1]
            gap = np.abs(counts[:, lo:hi] / safe[:, None] - problem.ref[lo:hi]).sum(axis=1) * problem.dim_scale[d]
            gap = np.where(n_s > 0, gap, 1.0)
            marg += problem.dim_w[d] * gap
        out += size_term + marg
    return out


def oracle_partition(groups: Sequence[SubjectGroup], config: PartitionConfig | None = None) -> PartitionAssignment:
    """Exhaustive minimum over all 3**G group -> set assignments.

    Ties go to the lexicographically smallest assignment sequence
    (train < valid < test, first group most significant).
    """
    config = config or PartitionConfig()
    n_groups = len(groups)
    if n_groups > ORACLE_MAX_GROUPS:
        raise OracleTooLargeError(f"oracle refuses {n_groups} groups (limit {ORACLE_MAX_GROUPS}: 3**G assignments)")
    if n_groups == 0:
        raise ValidationError("oracle needs at least one group")
    problem = BalanceProblem.from_groups(groups, config)
    n_total = 3**n_groups
    chunk = 3 ** min(n_groups, 10)
    powers = 3 ** np.arange(n_groups - 1, -1, -1, dtype=np.int64)
    values = np.empty(n_total)
    for start in range(0, n_total, chunk):
        idx = np.arange(start, min(start + chunk, n_total), dtype=np.int64)
        sets = (idx[:, None] // powers[None, :]) % 3
        values[start : start + idx.size] = _vector_objective(sets, problem)
    best_value = values.min()
    candidates = np.flatnonzero(values <= best_value + 1e-12 * max(1.0, abs(best_value)))
    # settle near-ties with the canonical objective
    canonical = _kernels.PY_KERNELS["assignment_objective"]
    scored = []
    for m in candidates:
        sets = ((m // powers) % 3).astype(np.int64)
        scored.append((float(canonical(sets, *problem.args())), int(m), sets))
    _, _, best_sets = min(scored, key=lambda t: (t[0], t[1]))
    fractions, gaps, value = _statistics(best_sets, problem, _kernels.PY_KERNELS)
    return PartitionAssignment(
        group_ids=tuple(g.group_id for g in groups),
        sets=best_sets,
        fractions=fractions,
        gaps=gaps,
        objective=value,
        config=config,
    )


def enumerate_assignments(n_groups: int):
    """All group -> set-index tuples in lexicographic order (for small tests)."""
    return itertools.product(range(3), repeat=n_groups)


# ---------------------------------------------------------------------------
# reference metrics: plain loops straight from the definitions

_SKIP = {"age": {None}, "gender": {None, "OtherUncertain"}, "race": {None, "Unlabeled"}}


def ref_f1_macro(truths, preds, k):
    scores = []
    for c in range(k):
        tp = fp = fn = 0
        for t, p in zip(truths, preds):
            if t == c and p == c:
                tp += 1
            elif p == c:
                fp += 1
            elif t == c:
                fn += 1
        if tp + fp + fn == 0:
            continue
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        scores.append(0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall))
    return sum(scores) / len(scores)


def ref_f1_binary(truths, preds):
    n_au = len(truths[0])
    scores = []
    for a in range(n_au):
        tp = fp = fn = 0
        for t, p in zip(truths, preds):
            if t[a] == 1 and p[a] == 1:
                tp += 1
            elif p[a] == 1:
                fp += 1
            elif t[a] == 1:
                fn += 1
        if tp + fp + fn == 0:
            continue
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        scores.append(0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall))
    if not scores:
        raise UndefinedMetricError("no AU is active in either truths or predictions")
    return sum(scores) / len(scores)


def ref_sp(profiles):
    """``profiles[i][c]`` = p(pred = c | subgroup i)."""
    n = len(profiles)
    if n < 2:
        raise UndefinedMetricError("statistical parity needs >= 2 subgroups")
    total = 0.0
    for c in range(len(profiles[0])):
        for i in range(n):
            for j in range(i + 1, n):
                total += abs(profiles[i][c] - profiles[j][c])
    return 2 * total / (n * (n - 1))


def ref_dpd(rates):
    """``rates[i][c]`` = p(AU c predicted active | subgroup i)."""
    n = len(rates)
    if n < 2:
        raise UndefinedMetricError("DPD needs >= 2 subgroups")
    k = len(rates[0])
    acc = 0.0
    for c in range(k):
        col = [rates[i][c] for i in range(n)]
        acc += max(col) - min(col)
    return acc / k


def ref_ccc(x, y):
    n = len(x)
    if n < 2 or n != len(y):
        raise ValidationError("ccc needs two sequences of equal length >= 2")
    mx = sum(x) / n
    my = sum(y) / n
    sx2 = sum((a - mx) ** 2 for a in x) / n
    sy2 = sum((b - my) ** 2 for b in y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y)) / n
    denom = sx2 + sy2 + (mx - my) ** 2
    if denom == 0:
        return 1.0
    return max(-1.0, min(1.0, 2 * sxy / denom))


def ref_average_ccc(pairs):
    """``pairs`` = [(ccc_valence_i, ccc_arousal_i), ...]."""
    if not pairs:
        raise UndefinedMetricError("no eligible subgroup")
    return sum(v + a for v, a in pairs) / (2 * len(pairs))


def _ref_subgroups(joined: JoinedEvaluationSet, attribute: str) -> dict:
    values = getattr(joined, attribute)
    groups: dict = {}
    for i, v in enumerate(values):
        if v in _SKIP[attribute]:
            continue
        groups.setdefault(v, []).append(i)
    return groups


def reference_metrics(joined: JoinedEvaluationSet) -> dict:
    """Every measure for ``joined`` via naive loops.

    Keys: ``performance`` plus, per attribute, ``{attr}_fairness`` (SP, DPD or
    average CCC) and ``{attr}_subgroup_f1`` (classification tasks). A metric
    that is undefined for the input maps to the raised exception instance.
    """
    task = joined.task
    truths = joined.truths.tolist()
    preds = joined.preds.tolist()
    out: dict = {}
    if task is TaskKind.EXPR:
        k = len(joined.schema.vocabulary)
        out["performance"] = ref_f1_macro(truths, preds, k)
    elif task is TaskKind.AU:
        out["performance"] = _guard(lambda: ref_f1_binary(truths, preds))
    else:
        cv = ref_ccc([t[0] for t in truths], [p[0] for p in preds])
        ca = ref_ccc([t[1] for t in truths], [p[1] for p in preds])
        out["ccc_valence"], out["ccc_arousal"] = cv, ca
        out["performance"] = (cv + ca) / 2
    for attr in ("age", "gender", "race"):
        groups = _ref_subgroups(joined, attr)
        if task is TaskKind.EXPR:
            k = len(joined.schema.vocabulary)
            profiles = []
            for idx in groups.values():
                profiles.append([sum(1 for i in idx if preds[i] == c) / len(idx) for c in range(k)])
            out[f"{attr}_fairness"] = _guard(lambda: ref_sp(profiles))
            scores = [ref_f1_macro([truths[i] for i in idx], [preds[i] for i in idx], k) for idx in groups.values()]
            out[f"{attr}_subgroup_f1"] = sum(scores) / len(scores) if scores else UndefinedMetricError(attr)
        elif task is TaskKind.AU:
            n_au = len(truths[0]) if truths else 0
            rates = [[sum(preds[i][c] for i in idx) / len(idx) for c in range(n_au)] for idx in groups.values()]
            out[f"{attr}_fairness"] = _guard(lambda: ref_dpd(rates))
            scores = []
            for idx in groups.values():
                try:
                    scores.append(ref_f1_binary([truths[i] for i in idx], [preds[i] for i in idx]))
                except UndefinedMetricError:
                    pass
            out[f"{attr}_subgroup_f1"] = sum(scores) / len(scores) if scores else UndefinedMetricError(attr)
        else:
            pairs = []
            for idx in groups.values():
                if len(idx) < 2:
                    continue
                pairs.append(
                    (
                        ref_ccc([truths[i][0] for i in idx], [preds[i][0] for i in idx]),
                        ref_ccc([truths[i][1] for i in idx], [preds[i][1] for i in idx]),
                    )
                )
            out[f"{attr}_fairness"] = _guard(lambda: ref_average_ccc(pairs))
    return out


def _guard(fn):
    try:
        return fn()
    except UndefinedMetricError as exc:
        return exc
