"""Subject-independent train/valid/test partitioning with balanced marginals.

The solver minimises

    J = sum over sets of  w_size * |frac - target|  +  sum_d w_d * gap_d

where ``gap_d`` is the L1 distance between the set's and the whole
manifest's distribution over dimension ``d`` (label stratum, age, gender,
race). For the AU task the label gap is the mean absolute difference of
per-AU activation rates. An empty set has unit gap in every dimension.

Groups (subjects, or single samples when no subject id is given) are seeded
greedily, largest first, then refined by an improving local search over
single-group moves and pairwise swaps drawn from a seeded SplitMix64 stream.
Further restarts perturb the greedy start; the best result wins.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from . import __version__
from . import _kernels
from .domain import TaskKind, age_label_sort_key
from .errors import DomainError, InfeasibleError, ValidationError
from .kvfile import format_kv, read_kv
from .manifest import Manifest, VaPoint

log = logging.getLogger(__name__)

SET_NAMES = ("train", "valid", "test")
DIMENSIONS = ("label", "age", "gender", "race")
GRID_CELLS = 10
THREADS_ENV = "FAIRSPLIT_THREADS"
UNLABELED = "Unlabeled"
_BLOCK = 1 << 16


@dataclasses.dataclass(frozen=True)
class PartitionConfig:
    target_fractions: tuple[float, float, float] = (0.55, 0.15, 0.30)
    w_size: float = 4.0
    w_label: float = 2.0
    w_age: float = 1.0
    w_gender: float = 1.0
    w_race: float = 1.0
    seed: int = 0
    move_budget: int = 200_000
    patience: int = 20_000
    restarts: int = 32

    def __post_init__(self):
        fr = tuple(float(f) for f in self.target_fractions)
        object.__setattr__(self, "target_fractions", fr)
        if len(fr) != 3 or any(not f > 0 for f in fr):
            raise ValidationError(f"target fractions must be three positive numbers, got {fr}")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ValidationError(f"target fractions must sum to 1, got {sum(fr)!r}")
        for name in ("w_size", "w_label", "w_age", "w_gender", "w_race"):
            value = float(getattr(self, name))
            if not (value >= 0 and math.isfinite(value)):
                raise ValidationError(f"{name} must be a finite non-negative number, got {value}")
            object.__setattr__(self, name, value)
        for name in ("move_budget", "patience", "restarts"):
            value = int(getattr(self, name))
            if value < (1 if name == "restarts" else 0):
                raise ValidationError(f"{name} out of range: {value}")
            object.__setattr__(self, name, value)
        seed = int(self.seed)
        if not -(1 << 63) <= seed < (1 << 64):
            raise ValidationError(f"seed must fit in 64 bits, got {seed}")
        object.__setattr__(self, "seed", seed)

    @property
    def dimension_weights(self) -> dict[str, float]:
        return {"label": self.w_label, "age": self.w_age, "gender": self.w_gender, "race": self.w_race}

    def as_items(self) -> dict[str, object]:
        return {
            "fractions": ",".join(repr(f) for f in self.target_fractions),
            "w_size": repr(self.w_size),
            "w_label": repr(self.w_label),
            "w_age": repr(self.w_age),
            "w_gender": repr(self.w_gender),
            "w_race": repr(self.w_race),
            "seed": self.seed,
            "move_budget": self.move_budget,
            "patience": self.patience,
            "restarts": self.restarts,
        }

    @classmethod
    def from_items(cls, items: Mapping[str, str], base: "PartitionConfig | None" = None) -> "PartitionConfig":
        """Build a config from string key/values (config file or CLI)."""
        fields = dataclasses.asdict(base or cls())
        for key, value in items.items():
            key = key.strip().lower()
            if key in ("fractions", "target_fractions"):
                fields["target_fractions"] = parse_fractions(value)
            elif key == "weights":
                fields.update(parse_weights(value))
            elif key in ("w_size", "w_label", "w_age", "w_gender", "w_race"):
                fields[key] = _as_float(key, value)
            elif key in ("seed", "move_budget", "patience", "restarts"):
                fields[key] = _as_int(key, value)
            else:
                raise ValidationError(f"unknown partition config key {key!r}")
        return cls(**fields)

    @classmethod
    def from_file(cls, path: str | os.PathLike, base: "PartitionConfig | None" = None) -> "PartitionConfig":
        return cls.from_items(read_kv(path), base)


def _as_float(key: str, text) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        raise ValidationError(f"{key}: expected a number, got {text!r}") from None


def _as_int(key: str, text) -> int:
    try:
        return int(str(text).strip(), 0)
    except ValueError:
        raise ValidationError(f"{key}: expected an integer, got {text!r}") from None


def parse_fractions(text: str) -> tuple[float, float, float]:
    parts = [p for p in str(text).replace(" ", "").split(",") if p]
    if len(parts) != 3:
        raise ValidationError(f"fractions: expected three comma-separated numbers, got {text!r}")
    return tuple(_as_float("fractions", p) for p in parts)


def parse_weights(text: str) -> dict[str, float]:
    """``size=4,label=2,age=1`` -> ``{"w_size": 4.0, ...}``."""
    out = {}
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ValidationError(f"weights: expected name=value pairs, got {part!r}")
        name, value = (p.strip().lower() for p in part.split("=", 1))
        key = name if name.startswith("w_") else "w_" + name
        if key not in ("w_size", "w_label", "w_age", "w_gender", "w_race"):
            raise ValidationError(f"weights: unknown weight {name!r}")
        out[key] = _as_float(key, value)
    return out


# ---------------------------------------------------------------------------
# strata


def discretize_va_grid(point: VaPoint | tuple[float, float]) -> tuple[int, int]:
    """(valence, arousal) -> (row, col) cell of the 10x10 grid of 0.2-wide bins.

    Intervals are half-open; a value on an interior boundary belongs to the
    higher cell and 1.0 falls in the last cell.
    """
    return _grid_index(point[0], "valence"), _grid_index(point[1], "arousal")


def _grid_index(x: float, what: str) -> int:
    x = float(x)
    if not -1.0 <= x <= 1.0:
        raise DomainError(f"{what} {x} outside [-1, 1]")
    t = (x + 1.0) * (GRID_CELLS / 2.0)
    k = math.floor(t)
    nearest = round(t)
    if abs(t - nearest) < 1e-9:
        # snap representation error so boundaries land in the upper cell
        k = nearest
    return min(int(k), GRID_CELLS - 1)


class StratumKey(NamedTuple):
    label_stratum: object  # category index, (row, col) VA cell, or None for AU
    age_bin: str
    gender: str
    race: str


@dataclasses.dataclass(frozen=True, eq=False)
class Strata:
    """Integer-coded balancing dimensions of a manifest.

    ``codes[d][i]`` indexes ``categories[d]`` for sample ``i``; for the AU
    task ``au_active`` replaces the label codes.
    """

    task: TaskKind
    sample_ids: tuple[str, ...]
    group_ids: tuple[str, ...]
    group_index: np.ndarray
    categories: dict[str, tuple]
    codes: dict[str, np.ndarray]
    au_ids: tuple[str, ...] = ()
    au_active: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.sample_ids)

    @property
    def n_groups(self) -> int:
        return len(self.group_ids)

    @property
    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.group_index, minlength=self.n_groups).astype(np.int64)

    def key(self, i: int) -> StratumKey:
        label = None if self.task is TaskKind.AU else self.categories["label"][self.codes["label"][i]]
        return StratumKey(
            label,
            self.categories["age"][self.codes["age"][i]],
            self.categories["gender"][self.codes["gender"][i]],
            self.categories["race"][self.codes["race"][i]],
        )

    def global_marginals(self) -> dict[str, dict]:
        """Per dimension, category -> proportion (AU: AU id -> activation rate)."""
        n = len(self.sample_ids)
        out = {}
        for dim, cats in self.categories.items():
            counts = np.bincount(self.codes[dim], minlength=len(cats))
            out[dim] = {c: (counts[j] / n if n else 0.0) for j, c in enumerate(cats)}
        if self.au_active is not None:
            rates = self.au_active.mean(axis=0) if n else np.zeros(len(self.au_ids))
            out["label"] = {a: float(r) for a, r in zip(self.au_ids, rates)}
        return out


def _encode(values: Sequence, sort_key=None) -> tuple[tuple, np.ndarray]:
    cats = sorted(set(values), key=sort_key)
    lookup = {c: j for j, c in enumerate(cats)}
    return tuple(cats), np.fromiter((lookup[v] for v in values), dtype=np.int64, count=len(values))


def _demographic_key(value):
    # Unlabeled sorts last
    return (value == UNLABELED, value)


def build_strata(manifest: Manifest) -> Strata:
    samples = manifest.samples
    task = manifest.task
    group_ids, group_index = _encode([s.group_id for s in samples])
    ages = [s.age_bin if s.age_bin is not None else UNLABELED for s in samples]
    genders = [s.gender if s.gender is not None else UNLABELED for s in samples]
    races = [s.race for s in samples]
    categories, codes = {}, {}
    au_active = None
    if task is TaskKind.EXPR:
        categories["label"], codes["label"] = _encode([s.label for s in samples])
    elif task is TaskKind.VA:
        categories["label"], codes["label"] = _encode([discretize_va_grid(s.label) for s in samples])
    else:
        au_active = manifest.label_array()
        if au_active.size and au_active.max() > 1:
            raise ValidationError("AU labels must be binarized before stratification (found intensities > 1)")
    categories["age"], codes["age"] = _encode(ages, sort_key=_category_sort_key("age"))
    categories["gender"], codes["gender"] = _encode(genders, sort_key=_category_sort_key("gender"))
    categories["race"], codes["race"] = _encode(races, sort_key=_category_sort_key("race"))
    return Strata(
        task=task,
        sample_ids=tuple(s.sample_id for s in samples),
        group_ids=group_ids,
        group_index=group_index,
        categories=categories,
        codes=codes,
        au_ids=manifest.au_ids if task is TaskKind.AU else (),
        au_active=au_active,
    )


@dataclasses.dataclass(frozen=True)
class SubjectGroup:
    """One subject (or lone sample) with its cached per-dimension counts.

    ``counts["label"]`` maps label category -> count, or AU id -> number of
    active samples for the AU task (``au_task`` true).
    """

    group_id: str
    sample_ids: tuple[str, ...]
    counts: dict[str, dict]
    au_task: bool = False

    @property
    def size(self) -> int:
        return len(self.sample_ids)


def subject_groups(strata: Strata) -> list[SubjectGroup]:
    """Groups in ``strata.group_ids`` order with counts recomputed from the samples."""
    members: list[list[int]] = [[] for _ in range(strata.n_groups)]
    for i, g in enumerate(strata.group_index):
        members[g].append(i)
    out = []
    for g, idx in enumerate(members):
        counts = {}
        for dim in DIMENSIONS:
            if dim == "label" and strata.task is TaskKind.AU:
                active = strata.au_active[idx].sum(axis=0)
                counts[dim] = {a: int(v) for a, v in zip(strata.au_ids, active)}
                continue
            cats = strata.categories[dim]
            tally = np.bincount(strata.codes[dim][idx], minlength=len(cats))
            counts[dim] = {cats[j]: int(v) for j, v in enumerate(tally) if v}
        out.append(
            SubjectGroup(strata.group_ids[g], tuple(strata.sample_ids[i] for i in idx), counts, strata.task is TaskKind.AU)
        )
    return out


def _category_sort_key(dim: str):
    if dim == "age":
        return lambda a: (a == UNLABELED, age_label_sort_key(a) if a != UNLABELED else (0, 0))
    if dim in ("gender", "race"):
        return _demographic_key
    return None


# ---------------------------------------------------------------------------
# kernel problem encoding


@dataclasses.dataclass(frozen=True, eq=False)
class BalanceProblem:
    gcounts: np.ndarray
    gsize: np.ndarray
    ref: np.ndarray
    dim_start: np.ndarray
    dim_w: np.ndarray
    dim_scale: np.ndarray
    targets: np.ndarray
    w_size: float
    total: int

    @classmethod
    def build(cls, strata: Strata, config: PartitionConfig) -> "BalanceProblem":
        n_groups = strata.n_groups
        gi = strata.group_index
        n = len(strata)
        blocks, refs, starts, weights, scales = [], [], [0], [], []
        weight_of = config.dimension_weights
        for dim in DIMENSIONS:
            if dim == "label" and strata.task is TaskKind.AU:
                k = len(strata.au_ids)
                block = np.zeros((n_groups, k), dtype=np.int64)
                np.add.at(block, gi, strata.au_active)
                ref = strata.au_active.sum(axis=0) / n if n else np.zeros(k)
                scale = 1.0 / k if k else 0.0
            else:
                k = len(strata.categories[dim])
                flat = np.bincount(gi * k + strata.codes[dim], minlength=n_groups * k)
                block = flat.reshape(n_groups, k).astype(np.int64)
                ref = np.bincount(strata.codes[dim], minlength=k) / n if n else np.zeros(k)
                scale = 1.0
            blocks.append(block)
            refs.append(np.asarray(ref, dtype=np.float64))
            starts.append(starts[-1] + k)
            weights.append(weight_of[dim])
            scales.append(scale)
        return cls(
            gcounts=np.ascontiguousarray(np.concatenate(blocks, axis=1)),
            gsize=strata.group_sizes,
            ref=np.concatenate(refs),
            dim_start=np.asarray(starts, dtype=np.int64),
            dim_w=np.asarray(weights, dtype=np.float64),
            dim_scale=np.asarray(scales, dtype=np.float64),
            targets=np.asarray(config.target_fractions, dtype=np.float64),
            w_size=float(config.w_size),
            total=int(n),
        )

    @classmethod
    def from_groups(cls, groups: Sequence[SubjectGroup], config: PartitionConfig) -> "BalanceProblem":
        """Encoding built from cached group counts; columns ordered as in :func:`build_strata`."""
        n_groups = len(groups)
        gsize = np.array([g.size for g in groups], dtype=np.int64)
        total = int(gsize.sum())
        au_task = bool(groups) and groups[0].au_task
        blocks, refs, starts, weights, scales = [], [], [0], [], []
        weight_of = config.dimension_weights
        for dim in DIMENSIONS:
            if dim == "label" and au_task:
                cats = list(groups[0].counts[dim])
            else:
                seen = set().union(*(g.counts[dim] for g in groups)) if groups else set()
                cats = sorted(seen, key=_category_sort_key(dim))
            block = np.array([[g.counts[dim].get(c, 0) for c in cats] for g in groups], dtype=np.int64)
            block = block.reshape(n_groups, len(cats))
            blocks.append(block)
            refs.append(block.sum(axis=0) / total if total else np.zeros(len(cats)))
            starts.append(starts[-1] + len(cats))
            weights.append(weight_of[dim])
            scales.append((1.0 / len(cats) if cats else 0.0) if dim == "label" and au_task else 1.0)
        return cls(
            gcounts=np.ascontiguousarray(np.concatenate(blocks, axis=1)),
            gsize=gsize,
            ref=np.concatenate(refs).astype(np.float64),
            dim_start=np.asarray(starts, dtype=np.int64),
            dim_w=np.asarray(weights, dtype=np.float64),
            dim_scale=np.asarray(scales, dtype=np.float64),
            targets=np.asarray(config.target_fractions, dtype=np.float64),
            w_size=float(config.w_size),
            total=total,
        )

    @property
    def n_groups(self) -> int:
        return self.gsize.shape[0]

    def args(self) -> tuple:
        return (
            self.gcounts, self.gsize, np.int64(self.total), self.targets, self.w_size,
            self.ref, self.dim_start, self.dim_w, self.dim_scale,
        )


# ---------------------------------------------------------------------------
# assignment


@dataclasses.dataclass(frozen=True, eq=False)
class PartitionAssignment:
    group_ids: tuple[str, ...]
    sets: np.ndarray  # set index per group, aligned with group_ids
    fractions: dict[str, float]
    gaps: dict[str, dict[str, float]]
    objective: float
    config: PartitionConfig
    trace: tuple[float, ...] = ()
    warnings: tuple[str, ...] = ()
    moves_used: int = 0

    @property
    def mapping(self) -> dict[str, str]:
        return {g: SET_NAMES[s] for g, s in zip(self.group_ids, self.sets)}

    def sample_sets(self, strata: Strata) -> np.ndarray:
        return self.sets[strata.group_index]

    def set_sizes(self, strata: Strata) -> dict[str, int]:
        counts = np.bincount(self.sample_sets(strata), minlength=3)
        return {name: int(c) for name, c in zip(SET_NAMES, counts)}


def _sets_from(assignment, strata: Strata) -> np.ndarray:
    if isinstance(assignment, PartitionAssignment):
        if assignment.group_ids != strata.group_ids:
            lookup = assignment.mapping
            return np.array([SET_NAMES.index(lookup[g]) for g in strata.group_ids], dtype=np.int64)
        return np.asarray(assignment.sets, dtype=np.int64)
    if isinstance(assignment, Mapping):
        try:
            return np.array(
                [_set_index(assignment[g]) for g in strata.group_ids], dtype=np.int64
            )
        except KeyError as exc:
            raise ValidationError(f"assignment is missing group {exc.args[0]!r}") from None
    sets = np.asarray(assignment, dtype=np.int64)
    if sets.shape != (strata.n_groups,) or (sets.size and (sets.min() < 0 or sets.max() > 2)):
        raise ValidationError("assignment must give a set index 0..2 for every group")
    return sets


def _set_index(value) -> int:
    if isinstance(value, str):
        if value not in SET_NAMES:
            raise ValidationError(f"unknown set name {value!r}")
        return SET_NAMES.index(value)
    if int(value) not in (0, 1, 2):
        raise ValidationError(f"set index must be 0, 1 or 2, got {value!r}")
    return int(value)


def objective(assignment, strata: Strata, config: PartitionConfig, use_jit: bool | None = None) -> float:
    """Balance objective of a complete assignment (0 iff every target is met exactly).

    ``assignment`` may be a :class:`PartitionAssignment`, a mapping
    ``group_id -> set`` or an array of set indices aligned with
    ``strata.group_ids``.
    """
    sets = _sets_from(assignment, strata)
    problem = BalanceProblem.build(strata, config)
    k = _kernels.kernels(use_jit)
    return float(k["assignment_objective"](sets, *problem.args()))


def _statistics(sets: np.ndarray, problem: BalanceProblem, kern) -> tuple[dict, dict, float]:
    set_counts = np.zeros((3, problem.gcounts.shape[1]), dtype=np.int64)
    set_n = np.zeros(3, dtype=np.int64)
    kern["accumulate"](sets, problem.gcounts, problem.gsize, set_counts, set_n)
    fractions = {name: (int(set_n[s]) / problem.total if problem.total else 0.0) for s, name in enumerate(SET_NAMES)}
    gaps = {}
    out = np.empty(len(DIMENSIONS))
    for s, name in enumerate(SET_NAMES):
        kern["set_gaps"](set_counts[s], set_n[s], problem.ref, problem.dim_start, problem.dim_scale, out)
        gaps[name] = {d: float(v) for d, v in zip(DIMENSIONS, out)}
    value = float(kern["assignment_objective"](sets, *problem.args()))
    return fractions, gaps, value


def _thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValidationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None


def restart_seed(seed: int, restart: int) -> int:
    """Seed of restart ``restart``; restart 0 uses ``seed`` itself."""
    if restart == 0:
        return int(seed) % (1 << 64)
    return int(_kernels.splitmix64(seed, (1 << 40) + restart, 1)[0])


def _run_one(problem: BalanceProblem, config: PartitionConfig, restart: int, kern) -> tuple[float, np.ndarray, list, int]:
    n_groups = problem.n_groups
    sets = np.zeros(n_groups, dtype=np.int64)
    order = np.argsort(-problem.gsize, kind="stable").astype(np.int64)
    kern["greedy_seed"](order, *problem.args(), sets)
    seed = restart_seed(config.seed, restart)
    if restart > 0:
        # perturb the greedy start: re-draw roughly a third of the placements
        words = _kernels.splitmix64(seed, 1 << 50, 2 * n_groups).reshape(n_groups, 2)
        kick = (words[:, 0] % np.uint64(3)) == 0
        sets = np.where(kick, (words[:, 1] % np.uint64(3)).astype(np.int64), sets)
    trace = [float(kern["assignment_objective"](sets, *problem.args()))]
    rejections = 0
    used_total = 0
    start = 0
    buf = np.empty(_BLOCK)
    while start < config.move_budget and rejections < config.patience:
        count = min(_BLOCK, config.move_budget - start)
        moves = _kernels.decode_moves(_kernels.splitmix64(seed, 3 * start, 3 * count), n_groups)
        used, accepted, rejections = kern["local_search"](
            sets, *problem.args(), moves, np.int64(config.patience), np.int64(rejections), buf
        )
        trace.extend(buf[:accepted].tolist())
        used_total += int(used)
        start += count
    return trace[-1], sets, trace, used_total


def solve_partition(manifest: Manifest, config: PartitionConfig | None = None, use_jit: bool | None = None) -> PartitionAssignment:
    """Subject-independent split of ``manifest`` into train/valid/test.

    Deterministic: equal manifests and configs give identical assignments,
    independent of ``FAIRSPLIT_THREADS`` and of the kernel backend.
    """
    config = config or PartitionConfig()
    strata = build_strata(manifest)
    return solve_strata(strata, config, use_jit)


def solve_strata(strata: Strata, config: PartitionConfig, use_jit: bool | None = None) -> PartitionAssignment:
    if strata.n_groups < 3:
        raise InfeasibleError(f"need at least 3 subject groups to form three sets, found {strata.n_groups}")
    problem = BalanceProblem.build(strata, config)
    kern = _kernels.kernels(use_jit)
    warnings = []
    limit = max(config.target_fractions) + 0.05
    for g, size in zip(strata.group_ids, problem.gsize):
        share = size / problem.total
        if share > limit:
            warnings.append(
                f"group {g!r} holds {share:.3f} of all samples (> {limit:.2f}); target fractions are unreachable"
            )
    for w in warnings:
        log.warning(w)

    if config.restarts == 1:
        results = [_run_one(problem, config, 0, kern)]
    else:
        workers = min(_thread_count(), config.restarts)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda r: _run_one(problem, config, r, kern), range(config.restarts)))
    # winner by (objective, restart index): schedule independent
    best = min(range(len(results)), key=lambda r: (results[r][0], r))
    _, sets, trace, used = results[best]
    fractions, gaps, value = _statistics(sets, problem, kern)
    return PartitionAssignment(
        group_ids=strata.group_ids,
        sets=sets,
        fractions=fractions,
        gaps=gaps,
        objective=value,
        config=config,
        trace=tuple(trace),
        warnings=tuple(warnings),
        moves_used=used,
    )


def assignment_from_sets(strata: Strata, sets, config: PartitionConfig, use_jit: bool | None = None) -> PartitionAssignment:
    """Wrap an explicit group -> set vector with recomputed statistics."""
    sets = _sets_from(sets, strata).copy()
    problem = BalanceProblem.build(strata, config)
    fractions, gaps, value = _statistics(sets, problem, _kernels.kernels(use_jit))
    return PartitionAssignment(strata.group_ids, sets, fractions, gaps, value, config)


# ---------------------------------------------------------------------------
# output


def _label_names(manifest: Manifest, strata: Strata) -> list[tuple[str, np.ndarray, tuple]]:
    """(dimension name, per-sample codes, category names) rows for the statistics file."""
    rows = []
    if manifest.task is TaskKind.EXPR:
        vocab = manifest.schema.vocabulary
        rows.append(("expression", strata.codes["label"], tuple(vocab[c] for c in strata.categories["label"])))
    elif manifest.task is TaskKind.VA:
        names = tuple(f"v{r}_a{c}" for r, c in strata.categories["label"])
        rows.append(("va_cell", strata.codes["label"], names))
    else:
        for j, au in enumerate(strata.au_ids):
            rows.append((f"au_{au}", strata.au_active[:, j].astype(np.int64), ("0", "1")))
    for dim in ("gender", "race", "age"):
        rows.append((dim, strata.codes[dim], tuple(strata.categories[dim])))
    return rows


def statistics_rows(assignment: PartitionAssignment, manifest: Manifest, strata: Strata | None = None) -> list[tuple[str, str, str, int]]:
    """Long-format ``(set, dimension, category, count)`` rows, zero counts included."""
    strata = strata or build_strata(manifest)
    sample_sets = assignment.sample_sets(strata)
    out = []
    label_rows = _label_names(manifest, strata)
    for s, set_name in enumerate(SET_NAMES):
        mask = sample_sets == s
        out.append((set_name, "total", "all", int(mask.sum())))
        for dim, codes, names in label_rows:
            counts = np.bincount(codes[mask], minlength=len(names))
            out.extend((set_name, dim, str(name), int(c)) for name, c in zip(names, counts))
    return out


def emit_split(
    assignment: PartitionAssignment,
    manifest: Manifest,
    path: str | os.PathLike,
) -> tuple[Path, Path]:
    """Write ``split.csv``, ``statistics.csv`` and ``split_config.txt`` into ``path``."""
    out_dir = Path(path)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        strata = build_strata(manifest)
        sample_sets = assignment.sample_sets(strata)
        order = sorted(range(len(strata)), key=lambda i: strata.sample_ids[i])
        split_path = out_dir / "split.csv"
        with split_path.open("w", encoding="utf-8", newline="") as fh:
            fh.write("sample_id,set\n")
            for i in order:
                fh.write(f"{_csv_cell(strata.sample_ids[i])},{SET_NAMES[sample_sets[i]]}\n")
        stats_path = out_dir / "statistics.csv"
        with stats_path.open("w", encoding="utf-8", newline="") as fh:
            fh.write("set,dimension,category,count\n")
            for row in statistics_rows(assignment, manifest, strata):
                fh.write(",".join(_csv_cell(str(v)) for v in row) + "\n")
        meta = {"toolkit_version": __version__, "task": manifest.task.value, **assignment.config.as_items()}
        meta["objective"] = repr(assignment.objective)
        for name in SET_NAMES:
            meta[f"fraction_{name}"] = repr(assignment.fractions[name])
        for name in SET_NAMES:
            for dim in DIMENSIONS:
                meta[f"gap_{name}_{dim}"] = repr(assignment.gaps[name][dim])
        (out_dir / "split_config.txt").write_text(format_kv(meta), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write split files to {out_dir}: {exc}") from exc
    return split_path, stats_path


def _csv_cell(text: str) -> str:
    if any(ch in text for ch in ',"\n\r'):
        return '"' + text.replace('"', '""') + '"'
    return text


def read_split(path: str | os.PathLike) -> dict[str, str]:
    """``sample_id -> set`` from a split file."""
    path = Path(path)
    out: dict[str, str] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["sample_id", "set"]:
            raise ValidationError(f"{path}: expected header 'sample_id,set'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2 or row[1] not in SET_NAMES:
                raise ValidationError(f"{path}:{lineno}: malformed split row {row!r}")
            if row[0] in out:
                raise ValidationError(f"{path}:{lineno}: duplicate sample_id {row[0]!r}")
            out[row[0]] = row[1]
    return out
