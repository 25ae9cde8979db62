"""
Tests for retention/data/schema.py and retention/data/io.py
"""
import json

import pandas as pd
import pytest
from pydantic import ValidationError

from retention.core.errors import FormatError, SchemaError
from retention.data.io import export_tables_csv, read_dataset, write_dataset
from retention.data.schema import (
    PERFORMANCE_WIDTH,
    STATIC_FIELDS,
    STATIC_WIDTH,
    NoteDocument,
    StudentRecord,
    TaskLabels,
    onehot_encode,
)


def _demographics(**changes):
    demo = {name: values[0] for name, values in STATIC_FIELDS.items()}
    demo.update(changes)
    return demo


def _record(**changes):
    demo = _demographics()
    fields = dict(
        id="r1",
        gender="male",
        demographics=demo,
        static=onehot_encode(demo),
        performance=[[0.5] * PERFORMANCE_WIDTH, [0.4] * PERFORMANCE_WIDTH],
        labels=TaskLabels(y1=1, y2=1, y3=0, y4=3.0, y5=2),
    )
    fields.update(changes)
    return StudentRecord(**fields)


class TestOneHot:
    def test_width_and_single_hot_per_field(self):
        onehot = onehot_encode(_demographics())
        assert len(onehot) == STATIC_WIDTH == 120
        assert sum(onehot) == len(STATIC_FIELDS)

    def test_unknown_category_lists_valid(self):
        with pytest.raises(ValueError, match="blood_group"):
            onehot_encode(_demographics(blood_group="z+"))


class TestLabels:
    def test_no_dropout_has_no_downstream_labels(self):
        with pytest.raises(ValidationError):
            TaskLabels(y1=0, y2=1)

    def test_dropout_needs_type(self):
        with pytest.raises(ValidationError):
            TaskLabels(y1=1)

    def test_cause_out_of_range_lists_causes(self):
        with pytest.raises(ValidationError, match="0=financial"):
            TaskLabels(y1=1, y2=0, y5=15)

    @pytest.mark.parametrize(
        "labels, missing",
        [
            ({"y1": 1, "y2": 0}, "y5"),
            ({"y1": 1, "y2": 1, "y5": 2}, "y3, y4"),
            ({"y1": 1, "y2": 1, "y3": 0, "y5": 2}, "y4"),
            ({"y1": 1, "y2": 1, "y4": 3.0}, "y5, y3"),
        ],
    )
    def test_dropout_labels_must_be_complete(self, labels, missing):
        with pytest.raises(ValidationError, match=f"requires labels {missing}"):
            TaskLabels(**labels)

    def test_permanent_dropout_needs_no_timing(self):
        labels = TaskLabels(y1=1, y2=0, y5=4)
        assert labels.y3 is None and labels.y4 is None


class TestStudentRecord:
    def test_valid_record(self):
        record = _record()
        assert record.note_count == 0
        assert not record.synthetic

    def test_static_must_match_demographics(self):
        with pytest.raises(ValidationError, match="does not match"):
            _record(static=onehot_encode(_demographics(blood_group="o-")))

    def test_gender_must_match(self):
        with pytest.raises(ValidationError):
            _record(gender="female")

    def test_empty_performance(self):
        with pytest.raises(ValidationError, match="at least one semester"):
            _record(performance=[])

    def test_performance_width(self):
        with pytest.raises(ValidationError, match="expected 20"):
            _record(performance=[[0.0] * 19])

    def test_duration_beyond_horizon(self):
        with pytest.raises(ValidationError, match="horizon"):
            _record(labels=TaskLabels(y1=1, y2=1, y3=0, y4=5.0, y5=0))

    def test_notes_in_time_order(self):
        notes = [
            NoteDocument(note_id="a", timestamp=2, reason="course_planning", text="x"),
            NoteDocument(note_id="b", timestamp=1, reason="course_planning", text="y"),
        ]
        with pytest.raises(ValidationError, match="non-decreasing"):
            _record(notes=notes)

    def test_unknown_note_result(self):
        with pytest.raises(ValidationError):
            NoteDocument(note_id="a", timestamp=1, reason="personal_matter", result="bored", text="x")


class TestDatasetFiles:
    def test_write_then_read(self, tmp_path, cohort):
        path = write_dataset(cohort, tmp_path / "cohort.jsonl")
        assert read_dataset(path) == cohort

    def test_missing_directory(self, tmp_path, cohort):
        with pytest.raises(FormatError):
            write_dataset(cohort, tmp_path / "absent" / "cohort.jsonl")

    def test_malformed_line_reports_number(self, tmp_path, cohort):
        path = write_dataset(cohort[:2], tmp_path / "cohort.jsonl")
        with path.open("a", encoding="utf-8") as fh:
            fh.write("{not json\n")
        with pytest.raises(FormatError) as exc:
            read_dataset(path)
        assert exc.value.detail["line"] == 3

    def test_schema_violation_reports_line(self, tmp_path, cohort):
        raw = json.loads(cohort[0].model_dump_json())
        raw["static"] = raw["static"][:-1]
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps(raw) + "\n", encoding="utf-8")
        with pytest.raises(SchemaError, match=":1: invalid record") as exc:
            read_dataset(path)
        assert exc.value.detail["line"] == 1

    def test_incomplete_dropout_labels_rejected_on_read(self, tmp_path, cohort):
        raw = json.loads(next(r for r in cohort if r.labels.y2 == 1).model_dump_json())
        raw["labels"]["y3"] = None
        path = tmp_path / "partial.jsonl"
        path.write_text(json.dumps(raw) + "\n", encoding="utf-8")
        with pytest.raises(SchemaError, match="y3"):
            read_dataset(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError):
            read_dataset(tmp_path / "absent.jsonl")

    def test_csv_tables(self, tmp_path, cohort):
        static_path, performance_path = export_tables_csv(cohort, tmp_path / "tables")
        static = pd.read_csv(static_path)
        performance = pd.read_csv(performance_path)
        assert static.shape == (len(cohort), 1 + STATIC_WIDTH)
        assert "gender=female" in static.columns
        assert len(performance) == sum(len(r.performance) for r in cohort)
        assert performance["semester"].min() == 1
