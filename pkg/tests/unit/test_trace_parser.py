"""
Unit tests for the TraceParser class.
"""

import json

import pytest

from src.core.exceptions import TraceParseError, TraceValidationError
from src.core.request import TraceRecord
from src.parsers.trace_parser import TraceParser


def line(**fields):
    record = {"id": "q1", "arrival_s": 0.0, "context_id": "c", "context_len": 10, "query_len": 2, "output_len": 3}
    record.update(fields)
    return json.dumps(record)


class TestTraceParser:
    """Test cases for the TraceParser class."""

    def setup_method(self):
        """Set up test fixtures."""
        self.parser = TraceParser()

    def test_parse_lines(self):
        """Test that records are parsed and ordered by arrival."""
        records = self.parser.parse_lines([line(id="b", arrival_s=2.0), "", line(id="a", arrival_s=1.0)])

        assert [record.id for record in records] == ["a", "b"]
        assert records[0] == TraceRecord("a", 1.0, "c", 10, 2, 3)

    def test_ties_keep_file_order(self):
        records = self.parser.parse_lines([line(id="x"), line(id="y"), line(id="w")])

        assert [record.id for record in records] == ["x", "y", "w"]

    def test_optional_fields(self):
        records = self.parser.parse_lines([line(id="r0"), line(id="r1", round=1, depends_on="r0")])

        assert records[1].depends_on == "r0"
        assert records[1].round == 1

    def test_invalid_json(self):
        """Test that the failing line number is reported."""
        with pytest.raises(TraceParseError, match="Line 2: invalid JSON") as excinfo:
            self.parser.parse_lines([line(), "{not json"])
        assert excinfo.value.line_number == 2

    def test_not_an_object(self):
        with pytest.raises(TraceParseError, match="expected a JSON object"):
            self.parser.parse_lines(["[1, 2]"])

    def test_missing_field(self):
        record = json.loads(line())
        del record["output_len"]

        with pytest.raises(TraceParseError, match="missing field\\(s\\): output_len"):
            self.parser.parse_lines([json.dumps(record)])

    def test_unknown_field(self):
        with pytest.raises(TraceParseError, match="unknown field\\(s\\): priority"):
            self.parser.parse_lines([line(priority=1)])

    def test_boolean_is_not_an_integer(self):
        with pytest.raises(TraceParseError, match="query_len must be an integer"):
            self.parser.parse_lines([line(query_len=True)])

    def test_float_length(self):
        with pytest.raises(TraceParseError, match="context_len must be an integer"):
            self.parser.parse_lines([line(context_len=10.5)])

    def test_record_validation_wrapped(self):
        """Test that record-level checks surface as parse errors."""
        with pytest.raises(TraceParseError, match="Line 1: q1: output_len must be at least 1"):
            self.parser.parse_lines([line(output_len=0)])

    def test_duplicate_ids(self):
        with pytest.raises(TraceValidationError, match="Duplicate request id q1"):
            self.parser.parse_lines([line(), line()])

    def test_dangling_dependency(self):
        with pytest.raises(TraceValidationError, match="depends on unknown request r9"):
            self.parser.parse_lines([line(id="r1", round=1, depends_on="r9")])

    def test_dependency_cycle(self):
        with pytest.raises(TraceValidationError, match="Dependency cycle"):
            self.parser.parse_lines(
                [line(id="a", round=1, depends_on="b"), line(id="b", round=2, depends_on="a")]
            )

    def test_rounds_must_increase(self):
        with pytest.raises(TraceValidationError, match="must follow"):
            self.parser.parse_lines([line(id="r0", round=1), line(id="r1", round=1, depends_on="r0")])

    def test_parse_file(self, tmp_path):
        path = tmp_path / "trace.jsonl"
        path.write_text(line(id="a") + "\n" + line(id="b", arrival_s=0.5) + "\n")

        assert [record.id for record in self.parser.parse_file(str(path))] == ["a", "b"]

    def test_parse_missing_file(self):
        with pytest.raises(FileNotFoundError, match="Trace file not found"):
            self.parser.parse_file("nonexistent.jsonl")
