import json

import pytest

from fairsplit.domain import TaskKind
from fairsplit.errors import DomainError, ValidationError
from fairsplit.report import (
    AttributeResult,
    EvaluationReport,
    evaluate,
    fairness_flag,
    parse_table,
    percent,
    read_report,
    render_report,
    write_report,
)

from instances import random_joined

SWEEP = {0: "fair", 0.05: "fair", 0.1: "fair", 0.100001: "unfair", 0.5: "unfair", 1.0: "unfair"}


@pytest.mark.parametrize("kind", ["SP", "DPD"])
def test_flag_sweep(kind):
    assert {v: fairness_flag(kind, v) for v in SWEEP} == SWEEP


def test_flag_domain():
    assert fairness_flag("SP", 1.7) == "unfair"
    with pytest.raises(DomainError):
        fairness_flag("DPD", 1.2)
    with pytest.raises(DomainError):
        fairness_flag("SP", -0.01)
    with pytest.raises(DomainError):
        fairness_flag("CCC", 0.5)


@pytest.mark.parametrize("value,text", [(0.588, "58.8"), (0.015, "1.5"), (0.0005, "0.1"), (0.00049, "0.0"),
                                        (-0.0001, "0.0"), (1.0, "100.0"), (None, "-"), (0.1235, "12.4")])
def test_percent(value, text):
    assert percent(value) == text


def published_resnet18():
    """ResNet18 on the 7-class expression task, values as published."""
    vals = dict(age=(0.015, 0.559), gender=(0.009, 0.562), race=(0.019, 0.566))
    attrs = {a: AttributeResult(sp, f1, {}, fairness_flag("SP", sp)) for a, (sp, f1) in vals.items()}
    return EvaluationReport("ResNet18", TaskKind.EXPR, 0.588, attrs)


def test_table_row_layout():
    text = render_report([published_resnet18()])
    rows = parse_table(text)
    assert rows == [["ResNet18", "58.8", "1.5", "55.9", "0.9", "56.2", "1.9", "56.6", "fair/fair/fair"]]
    header = [ln for ln in text.splitlines() if not ln.startswith("#")][:2]
    assert [c.strip() for c in header[0].split("|")][:3] == ["Model", "Test", "Age"]
    assert [c.strip() for c in header[1].split("|")][1:3] == ["F1", "SP"]
    row = " ".join(text.splitlines()[-1].split())
    assert row.startswith("ResNet18 | 58.8 | 1.5 | 55.9 | 0.9 | 56.2 | 1.9 | 56.6")


def test_json_render_roundtrip(tmp_path):
    r = published_resnet18()
    doc = json.loads(render_report([r, r], "json"))
    assert doc["format"] == "fairsplit-report-set/1" and len(doc["reports"]) == 2
    (tmp_path / "set.json").write_text(render_report([r], "json"))
    assert read_report(tmp_path / "set.json") == [r]


def test_render_errors():
    with pytest.raises(ValidationError):
        render_report([])
    va = EvaluationReport("m", TaskKind.VA, 0.7, {})
    with pytest.raises(ValidationError, match="mixed"):
        render_report([published_resnet18(), va])
    with pytest.raises(ValidationError):
        render_report([va], "yaml")


@pytest.mark.parametrize("task", list(TaskKind))
def test_evaluate_roundtrip(tmp_path, task):
    joined = random_joined(21, task, n_groups=30)
    report = evaluate(joined, "net", config={"seed": 1})
    path = write_report(report, tmp_path / "r.json")
    assert read_report(path) == [report]
    assert report.n_evaluated == len(joined)
    text = render_report([report])
    assert parse_table(text)[0][0] == "net"
    if task is not TaskKind.VA:
        assert all(report.attributes[a].flag in ("fair", "unfair") for a in ("age", "gender", "race"))


def test_read_report_rejects(tmp_path):
    (tmp_path / "x.json").write_text("{not json")
    with pytest.raises(ValidationError):
        read_report(tmp_path / "x.json")
    (tmp_path / "y.json").write_text('{"format": "other"}')
    with pytest.raises(ValidationError):
        read_report(tmp_path / "y.json")
