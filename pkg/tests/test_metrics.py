import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairsplit import metrics
from fairsplit.domain import TaskKind
from fairsplit.errors import ShapeMismatchError, UndefinedMetricError, ValidationError
from fairsplit.metrics import SubgroupActivationRates, SubgroupCccTable, SubgroupClassRates
from fairsplit.synth import ref_ccc, ref_dpd, ref_f1_binary, ref_f1_macro, ref_sp, reference_metrics

from instances import mismatches, package_metrics, random_joined


def _rates(rows, attr="race"):
    rows = np.asarray(rows, dtype=float)
    names = tuple(f"g{i}" for i in range(len(rows)))
    return rows, names, attr


def test_f1_macro_hand_case():
    # A: TP 1, FN 1 -> 2/3; B: TP 2, FP 1 -> 4/5
    assert abs(metrics.f1_macro([0, 0, 1, 1], [0, 1, 1, 1], 2) - (2 / 3 + 4 / 5) / 2) < 1e-12


def test_f1_macro_absent_categories_skipped():
    assert metrics.f1_macro([0, 0], [0, 0], 7) == 1.0
    # a predicted-but-absent class scores 0 and stays in the mean
    assert metrics.f1_macro([0, 0], [0, 3], 7) == pytest.approx((2 / 3 + 0) / 2)


def test_f1_macro_errors():
    with pytest.raises(ShapeMismatchError):
        metrics.f1_macro([0, 1], [0], 2)
    with pytest.raises(ValidationError):
        metrics.f1_macro([0, 5], [0, 1], 2)


def test_f1_binary_hand_case():
    assert metrics.f1_binary_multilabel([[1], [1], [0], [0]], [[1], [0], [0], [1]]) == 0.5


def test_f1_binary_all_absent_undefined():
    with pytest.raises(UndefinedMetricError):
        metrics.f1_binary_multilabel([[0, 0]], [[0, 0]])


def test_sp_hand_case():
    rates = SubgroupClassRates("race", ("a", "b"), np.array([10, 10]), np.array([[0.7, 0.3], [0.5, 0.5]]))
    assert abs(metrics.statistical_parity(rates) - 0.4) < 1e-12


def test_sp_three_groups_matches_enumeration():
    profiles = [[0.2, 0.8], [0.2, 0.8], [0.6, 0.4]]
    rates = SubgroupClassRates("race", ("a", "b", "c"), np.ones(3), np.array(profiles))
    # pairs (a,c) and (b,c) each differ by 0.8 in total -> 2/(3*2) * 1.6
    assert metrics.statistical_parity(rates) == pytest.approx(1.6 / 3, abs=1e-12)
    assert metrics.statistical_parity(rates) == pytest.approx(ref_sp(profiles), abs=1e-12)


def test_sp_can_exceed_one():
    rates = SubgroupClassRates("g", ("a", "b"), np.ones(2), np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert metrics.statistical_parity(rates) == 2.0


def test_sp_single_subgroup_undefined():
    rates = SubgroupClassRates.from_counts("age", ["a", "b"], [[3, 1], [0, 0]])
    assert rates.subgroups == ("a",) and rates.excluded == ("b",)
    with pytest.raises(UndefinedMetricError):
        metrics.statistical_parity(rates)


def test_dpd_hand_cases():
    one = SubgroupActivationRates("age", ("a", "b", "c"), np.ones(3), np.array([[0.2], [0.5], [0.9]]))
    assert abs(metrics.demographic_parity_difference(one) - 0.7) < 1e-12
    two = SubgroupActivationRates("age", ("a", "b"), np.ones(2), np.array([[0.1, 0.4], [0.3, 0.4]]))
    assert abs(metrics.demographic_parity_difference(two) - 0.1) < 1e-12


def test_ccc_hand_cases():
    x = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    assert abs(metrics.ccc(x, -x) - (-1.0)) < 1e-12
    assert metrics.ccc(x, x) == 1.0
    assert metrics.ccc([0.3, 0.3], [0.3, 0.3]) == 1.0
    # constant predictions at the mean: covariance zero
    assert metrics.ccc(x, np.zeros(5)) == 0.0
    with pytest.raises(ValidationError):
        metrics.ccc([1.0], [1.0])


def test_average_ccc_hand_cases():
    one = SubgroupCccTable("g", ("a",), np.array([0.8]), np.array([0.6]))
    assert metrics.average_ccc_subgroups(one) == pytest.approx(0.7, abs=1e-12)
    two = SubgroupCccTable("g", ("a", "b"), np.array([0.8, 0.4]), np.array([0.6, 0.2]))
    assert metrics.average_ccc_subgroups(two) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(UndefinedMetricError):
        metrics.average_ccc_subgroups(SubgroupCccTable("g", (), np.array([]), np.array([])))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=40))
def test_f1_macro_property(pairs):
    t, p = zip(*pairs)
    assert metrics.f1_macro(t, p, 5) == pytest.approx(ref_f1_macro(t, p, 5), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 4).flatmap(lambda k: st.lists(
    st.tuples(st.lists(st.integers(0, 1), min_size=k, max_size=k), st.lists(st.integers(0, 1), min_size=k, max_size=k)),
    min_size=1, max_size=30)))
def test_f1_binary_property(rows):
    t = [r[0] for r in rows]
    p = [r[1] for r in rows]
    try:
        expected = ref_f1_binary(t, p)
    except UndefinedMetricError:
        with pytest.raises(UndefinedMetricError):
            metrics.f1_binary_multilabel(t, p)
        return
    assert metrics.f1_binary_multilabel(t, p) == pytest.approx(expected, abs=1e-12)


_unit = st.floats(0, 1, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 6), st.integers(1, 5), st.data())
def test_rate_metrics_property(n, k, data):
    rows = [data.draw(st.lists(_unit, min_size=k, max_size=k)) for _ in range(n)]
    acts = SubgroupActivationRates("g", tuple(map(str, range(n))), np.ones(n), np.array(rows))
    assert metrics.demographic_parity_difference(acts) == pytest.approx(ref_dpd(rows), abs=1e-12)
    cls = SubgroupClassRates("g", tuple(map(str, range(n))), np.ones(n), np.array(rows))
    assert metrics.statistical_parity(cls) == pytest.approx(ref_sp(rows), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=2, max_size=40))
def test_ccc_property(pairs):
    x, y = zip(*pairs)
    got = metrics.ccc(x, y)
    assert -1.0 <= got <= 1.0
    assert got == pytest.approx(ref_ccc(list(x), list(y)), abs=1e-9)
    assert metrics.ccc(y, x) == pytest.approx(got, abs=1e-12)


@pytest.mark.parametrize("task", list(TaskKind))
def test_joined_metrics_match_reference(task):
    for seed in range(60):
        joined = random_joined(seed, task)
        assert mismatches(package_metrics(joined), reference_metrics(joined)) == [], seed


def test_subgroup_exclusions():
    joined = random_joined(5, TaskKind.EXPR, n_groups=30)
    groups = metrics.subgroup_indices(joined, "race")
    assert "Unlabeled" not in groups
    assert "OtherUncertain" not in metrics.subgroup_indices(joined, "gender")
    assert None not in metrics.subgroup_indices(joined, "age")
    assert list(metrics.subgroup_indices(joined, "age")) == sorted(
        metrics.subgroup_indices(joined, "age"), key=lambda a: int(a.rstrip("+").split("-")[0])
    )


def test_subgroup_f1_weighting():
    joined = random_joined(8, TaskKind.EXPR, n_groups=25)
    plain = metrics.subgroup_f1(joined, "gender")
    weighted = metrics.subgroup_f1(joined, "gender", weighted=True)
    vals = np.array(list(plain.scores.values()))
    w = np.array([plain.sizes[g] for g in plain.scores])
    assert plain.mean == pytest.approx(vals.mean())
    assert weighted.mean == pytest.approx((vals * w).sum() / w.sum())


def test_task_mismatch():
    joined = random_joined(1, TaskKind.VA)
    with pytest.raises(ValidationError):
        metrics.class_rates(joined, "age")
