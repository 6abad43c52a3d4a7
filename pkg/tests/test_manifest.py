import logging

import numpy as np
import pytest

from fairsplit.domain import TaskKind
from fairsplit.errors import ShapeMismatchError, ValidationError
from fairsplit.manifest import (
    PredictionRecord,
    Schema,
    VaPoint,
    join_predictions,
    load_manifest,
    load_predictions,
    write_manifest,
    write_predictions,
)
from fairsplit.normalize import normalize_manifest
from fairsplit.synth import random_manifest

EXPR = Schema(TaskKind.EXPR)
HEADER = "sample_id,subject_id,expression,age,gender,race\n"


def _write(tmp_path, text, name="m.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_expression_manifest(tmp_path):
    p = _write(tmp_path, HEADER + "a,p1,Happiness,34,Female,Indian\nb,,neutral,70+,male,\n")
    m = load_manifest(p, EXPR)
    assert m.n_rows == 2 and m.n_columns == 6
    a, b = m.samples
    assert (a.label, a.age_bin, a.gender, a.race, a.subject_id) == (1, "30-39", "Female", "Indian", "p1")
    assert (b.label, b.age_bin, b.gender, b.race, b.subject_id) == (0, "70+", "Male", "Unlabeled", None)
    assert b.group_id != a.group_id


def test_unrecognized_demographics_warn(tmp_path, caplog):
    p = _write(tmp_path, HEADER + "a,p1,Happiness,34,Robot,Martian\n")
    with caplog.at_level(logging.WARNING):
        m = load_manifest(p, EXPR)
    assert m.samples[0].race == "Unlabeled" and m.samples[0].gender is None
    assert m.unrecognized == {"gender": 1, "race": 1}
    assert "mapped to unlabeled" in caplog.text


@pytest.mark.parametrize(
    "text,match",
    [
        ("sample_id,expression,age,gender\n", "race"),
        (HEADER + "a,p,Happiness,34,Female,Asian\na,p,Happiness,34,Female,Asian\n", "duplicate"),
        (HEADER + "a,p,Joy,34,Female,Asian\n", r"m.csv:2: expression"),
        (HEADER + "a,p,Happiness,34,Female\n", "expected 6 fields"),
        ("", "empty file"),
    ],
)
def test_load_errors(tmp_path, text, match):
    with pytest.raises(ValidationError, match=match):
        load_manifest(_write(tmp_path, text), EXPR)


def test_au_manifest_and_normalization(tmp_path):
    p = _write(tmp_path, "sample_id,au_1,au_12,age,gender,race\na,0,3,20-29,Female,White\nb,1,0,20-29,Male,White\n")
    m = load_manifest(p, Schema(TaskKind.AU))
    assert m.au_ids == ("1", "12")
    assert [s.label for s in m.samples] == [(0, 3), (1, 0)]
    assert [s.label for s in normalize_manifest(m).samples] == [(0, 1), (1, 0)]
    assert [s.label for s in normalize_manifest(m, au_threshold=1).samples] == [(0, 1), (0, 0)]
    with pytest.raises(ValidationError, match="au_4"):
        load_manifest(p, Schema(TaskKind.AU, au_ids=("1", "4")))


def test_va_rescale_on_normalize(tmp_path):
    p = _write(tmp_path, "sample_id,valence,arousal,age,gender,race\na,-10,5,20-29,Female,White\n")
    m = load_manifest(p, Schema(TaskKind.VA))
    with pytest.raises(ValidationError, match="outside"):
        normalize_manifest(m)
    assert normalize_manifest(m, va_range=(-10, 10)).samples[0].label == VaPoint(-1.0, 0.5)


@pytest.mark.parametrize("task", list(TaskKind))
def test_manifest_roundtrip(tmp_path, task):
    m = random_manifest(7, 6, task=task)
    path = write_manifest(m, tmp_path / "m.csv")
    back = load_manifest(path, Schema(task, vocabulary=m.schema.vocabulary))
    assert back == m


def test_predictions_join(tmp_path):
    m = random_manifest(3, 5)
    recs = [PredictionRecord(s.sample_id, (s.label + 1) % 7) for s in m.samples[:-2]]
    path = write_predictions(recs, m.schema, tmp_path / "p.csv")
    loaded = load_predictions(path, m.schema)
    assert loaded == recs
    joined = join_predictions(m, loaded)
    assert len(joined) == len(m) - 2 and len(joined.missing_ids) == 2
    assert np.array_equal(joined.preds, (joined.truths + 1) % 7)
    sub = join_predictions(m, loaded, restrict_to=[m.samples[0].sample_id])
    assert len(sub) == 1 and sub.ignored_predictions == len(recs) - 1


def test_prediction_errors(tmp_path):
    m = random_manifest(3, 3)
    with pytest.raises(ValidationError, match="unknown"):
        join_predictions(m, [PredictionRecord("nope", 0)])
    sid = m.samples[0].sample_id
    with pytest.raises(ValidationError, match="duplicate"):
        join_predictions(m, [PredictionRecord(sid, 0), PredictionRecord(sid, 1)])
    with pytest.raises(ShapeMismatchError):
        join_predictions(m, [PredictionRecord(sid, (0, 1))])
    (tmp_path / "p.csv").write_text("sample_id,pred_valence,pred_arousal\n" + f"{sid},0.1,0.2\n")
    with pytest.raises(ShapeMismatchError):
        load_predictions(tmp_path / "p.csv", m.schema)
