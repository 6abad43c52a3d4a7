"""Acceptance criteria, one test each; every run prints a PASS/FAIL line per criterion.

Run standalone with ``python tests/test_acceptance.py`` or through pytest,
where the lines appear in the terminal summary.
"""
from __future__ import annotations

import os
import sys
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from fairsplit import metrics  # noqa: E402
from fairsplit.cli import run  # noqa: E402
from fairsplit.domain import TaskKind  # noqa: E402
from fairsplit.manifest import PredictionRecord, write_manifest, write_predictions  # noqa: E402
from fairsplit.metrics import SubgroupActivationRates, SubgroupClassRates  # noqa: E402
from fairsplit.normalize import bin_age, binarize_au, rescale_va  # noqa: E402
from fairsplit.partition import (  # noqa: E402
    DIMENSIONS,
    PartitionConfig,
    build_strata,
    solve_partition,
    solve_strata,
    subject_groups,
)
from fairsplit.report import AttributeResult, EvaluationReport, fairness_flag, render_report  # noqa: E402
from fairsplit.synth import (  # noqa: E402
    affectnet_like_spec,
    generate_manifest,
    oracle_partition,
    random_manifest,
    reference_metrics,
)

from instances import mismatches, package_metrics, random_joined  # noqa: E402

RESULTS: dict[str, str] = {}


def record(name: str, ok: bool, detail: str) -> bool:
    RESULTS[name] = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    print(RESULTS[name])
    return ok


# ---------------------------------------------------------------------------


def criterion_1():
    """Metrics module equals the loop-based reference on 1000 instances per task."""
    t0 = time.perf_counter()
    bad = []
    for task in TaskKind:
        for seed in range(1000):
            joined = random_joined(seed, task)
            if mismatches(package_metrics(joined), reference_metrics(joined)):
                bad.append((task.value, seed))
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed <= 30
    return record("1 metric-oracle equivalence", ok,
                  f"3000 instances (SP+F1 / DPD+F1 / CCC+avgCCC), {len(bad)} mismatches > 1e-9, {elapsed:.1f}s (limit 30s)")


def criterion_2():
    """Hand-derived metric values."""
    sp = metrics.statistical_parity(SubgroupClassRates("r", ("a", "b"), np.ones(2), np.array([[0.7, 0.3], [0.5, 0.5]])))
    dpd = metrics.demographic_parity_difference(
        SubgroupActivationRates("r", ("a", "b", "c"), np.ones(3), np.array([[0.2], [0.5], [0.9]]))
    )
    x = np.array([-3.0, -1.0, 0.5, 1.5, 2.0])
    ccc = metrics.ccc(x, -x)
    f1 = metrics.f1_macro([0, 0, 1, 1], [0, 1, 1, 1], 2)
    got = {"SP": (sp, 0.4), "DPD": (dpd, 0.7), "CCC": (ccc, -1.0), "f1_macro": (f1, (2 / 3 + 4 / 5) / 2)}
    errs = {k: abs(a - b) for k, (a, b) in got.items()}
    ok = all(e <= 1e-12 for e in errs.values())
    return record("2 hand-checked metric values", ok,
                  ", ".join(f"{k}={a:.12g}" for k, (a, _) in got.items()) + f"; max err {max(errs.values()):.1e}")


def criterion_3():
    """Full-scale proportions and marginal gaps."""
    manifest = generate_manifest(affectnet_like_spec(290_580, seed=0))
    t0 = time.perf_counter()
    a = solve_partition(manifest, PartitionConfig(seed=0))
    elapsed = time.perf_counter() - t0
    fr = tuple(a.fractions[s] for s in ("train", "valid", "test"))
    worst_gap = max(a.gaps[s][d] for s in a.gaps for d in DIMENSIONS)
    ok = all(abs(f - t) <= 0.01 for f, t in zip(fr, (0.55, 0.15, 0.30))) and worst_gap <= 0.02 and elapsed <= 300
    return record("3 full-scale partition", ok,
                  f"fractions {fr[0]:.4f}/{fr[1]:.4f}/{fr[2]:.4f} (published 0.549/0.149/0.302), "
                  f"max gap {worst_gap:.2e} (limit 0.02), {elapsed:.1f}s (limit 300s)")


def criterion_4():
    """Local search within 5% of the exhaustive optimum, never below it."""
    t0 = time.perf_counter()
    ratios, below = [], 0
    for i in range(50):
        strata = build_strata(random_manifest(1000 + i, 9 + i % 4, max_group_size=30))
        cfg = PartitionConfig(seed=i)
        got = solve_strata(strata, cfg).objective
        best = oracle_partition(subject_groups(strata), cfg).objective
        below += got < best - 1e-12 * max(1.0, best)
        ratios.append(got / best)
    elapsed = time.perf_counter() - t0
    ok = max(ratios) <= 1.05 and below == 0 and elapsed <= 120
    return record("4 oracle optimality gap", ok,
                  f"50 instances of 9-12 groups, worst ratio {max(ratios):.4f} (limit 1.05), "
                  f"{sum(r > 1 + 1e-12 for r in ratios)} above optimum, {below} below, {elapsed:.1f}s (limit 120s)")


def criterion_5():
    """Every subject lands in exactly one set, and sets partition the manifest."""
    violations = 0
    tasks = list(TaskKind)
    for seed in range(200):
        rng = np.random.default_rng(seed)
        m = random_manifest(seed, int(rng.integers(3, 60)), task=tasks[seed % 3], max_group_size=int(rng.integers(1, 25)))
        a = solve_partition(m, PartitionConfig(seed=seed, restarts=4, move_budget=20_000))
        sets = a.sample_sets(build_strata(m))
        seen: dict[str, set] = {}
        for s, k in zip(m.samples, sets):
            seen.setdefault(s.group_id, set()).add(int(k))
        violations += sum(len(v) != 1 for v in seen.values())
        violations += len(sets) != len(m) or sum(a.set_sizes(build_strata(m)).values()) != len(m)
    return record("5 subject independence", violations == 0, f"200 random manifests, {violations} violations")


def _pipeline(workdir, tag, threads):
    """Full split/evaluate/report run inside its own directory, same relative arguments each time."""
    rundir = workdir / tag
    rundir.mkdir()
    os.environ["FAIRSPLIT_THREADS"] = str(threads)
    cwd = os.getcwd()
    os.chdir(rundir)
    try:
        common = ["--manifest", "../m.csv", "--classes", "7"]
        assert run(["split", *common, "--seed", "17", "--out", "out"]) == 0
        assert run(["evaluate", *common, "--predictions", "../p.csv", "--split", "out/split.csv",
                    "--model", "net", "--out", "out/report.json"]) == 0
        assert run(["report", "out/report.json", "--out", "out/table.txt"]) == 0
    finally:
        os.chdir(cwd)
    names = ("split.csv", "statistics.csv", "split_config.txt", "report.json", "table.txt")
    return {n: (rundir / "out" / n).read_bytes() for n in names}


def criterion_6(workdir):
    """Identical inputs give byte-identical split and report files."""
    m = random_manifest(77, 120, max_group_size=20)
    write_manifest(m, workdir / "m.csv")
    rng = np.random.default_rng(1)
    write_predictions([PredictionRecord(s.sample_id, int(rng.integers(7))) for s in m.samples], m.schema, workdir / "p.csv")
    saved = os.environ.get("FAIRSPLIT_THREADS")
    try:
        runs = [_pipeline(workdir, f"run{i}", t) for i, t in enumerate((1, 1, 4))]
    finally:
        if saved is None:
            os.environ.pop("FAIRSPLIT_THREADS", None)
        else:
            os.environ["FAIRSPLIT_THREADS"] = saved
    diff = [n for n in runs[0] if len({r[n] for r in runs}) != 1]
    return record("6 determinism", not diff,
                  f"3 runs (threads 1, 1, 4) x {len(runs[0])} files, differing: {diff or 'none'}")


def criterion_7():
    """Normalization exactness."""
    va_ok = rescale_va(-10, (-10, 10)) == -1.0 and rescale_va(10, (-10, 10)) == 1.0 and rescale_va(5, (-10, 10)) == 0.5
    au_ok = [binarize_au(i) for i in range(6)] == [0, 1, 1, 1, 1, 1]
    bins = [(0, 2), (3, 9), (10, 19), (20, 29), (30, 39), (40, 49), (50, 59), (60, 69), (70, 120)]
    labels = ["0-2", "3-9", "10-19", "20-29", "30-39", "40-49", "50-59", "60-69", "70+"]
    expected = [lab for (lo, hi), lab in zip(bins, labels) for _ in range(lo, hi + 1)]
    age_ok = [bin_age(a).value for a in range(121)] == expected
    return record("7 normalization exactness", va_ok and au_ok and age_ok,
                  f"rescale endpoints {'exact' if va_ok else 'WRONG'}, AU truth table {'exact' if au_ok else 'WRONG'}, "
                  f"ages 0-120 {'match' if age_ok else 'MISMATCH'} the nine bins")


def criterion_8():
    """Fairness flag rule on the value sweep."""
    sweep = [0, 0.05, 0.1, 0.100001, 0.5, 1.0]
    want = ["fair", "fair", "fair", "unfair", "unfair", "unfair"]
    got = {k: [fairness_flag(k, v) for v in sweep] for k in ("SP", "DPD")}
    ok = all(g == want for g in got.values())
    return record("8 fairness flagging", ok, "SP/DPD sweep -> " + ", ".join(got["SP"]))


def published_row_format():
    """render_report lays out the published ResNet18 expression row."""
    vals = dict(age=(0.015, 0.559), gender=(0.009, 0.562), race=(0.019, 0.566))
    attrs = {a: AttributeResult(sp, f1, {}, fairness_flag("SP", sp)) for a, (sp, f1) in vals.items()}
    text = render_report([EvaluationReport("ResNet18", TaskKind.EXPR, 0.588, attrs)])
    row = " ".join(text.splitlines()[-1].split())
    ok = row.startswith("ResNet18 | 58.8 | 1.5 | 55.9 | 0.9 | 56.2 | 1.9 | 56.6")
    return record("published row format", ok, row)


# ---------------------------------------------------------------------------


def test_criterion_1_metric_oracle():
    assert criterion_1()


def test_criterion_2_hand_values():
    assert criterion_2()


@pytest.mark.slow
def test_criterion_3_full_scale():
    assert criterion_3()


def test_criterion_4_oracle_gap():
    assert criterion_4()


def test_criterion_5_subject_independence():
    assert criterion_5()


def test_criterion_6_determinism(tmp_path):
    assert criterion_6(tmp_path)


def test_criterion_7_normalization():
    assert criterion_7()


def test_criterion_8_flags():
    assert criterion_8()


def test_published_row_format():
    assert published_row_format()


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    with tempfile.TemporaryDirectory() as tmp:
        outcomes = [criterion_1(), criterion_2(), criterion_3(), criterion_4(), criterion_5(),
                    criterion_6(Path(tmp)), criterion_7(), criterion_8(), published_row_format()]
    sys.exit(0 if all(outcomes) else 1)
