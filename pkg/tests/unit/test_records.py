import json
import math

import pytest

from ckav import WeightVector
from ckav.objectives import Evaluation
from ckav.records import (
    OutputFormat,
    SweepRecord,
    format_records,
    records_to_frame,
    write_records,
)


def record(params, loss, weights=None):
    return SweepRecord(params, loss, math.exp(loss), weights)


@pytest.fixture
def records():
    return [
        record({"k": 1}, 0.0),
        record({"k": 2}, math.log(2), WeightVector([0.25, 0.75])),
    ]


class TestSweepRecord:
    def test_rejects_inconsistent_ppl(self):
        with pytest.raises(ValueError, match="exp"):
            SweepRecord({"k": 1}, dev_loss=1.0, dev_ppl=2.0)

    def test_from_evaluation(self):
        rec = SweepRecord.from_evaluation({"tau": 1.0}, Evaluation.from_loss(0.5))
        assert (rec.dev_loss, rec.dev_ppl) == (0.5, math.exp(0.5))

    def test_to_dict(self):
        rec = record({"a": 1, "b": 0}, 0.5, WeightVector([0.5, 0.5]))
        assert list(rec.to_dict()) == ["a", "b", "dev_loss", "dev_ppl", "w_0", "w_1"]


def test_frame_columns_in_first_seen_order():
    frame = records_to_frame(
        [record({"a": 0, "b": 1}, 0.1), record({"b": 2, "c": 3}, 0.2)]
    )
    assert list(frame.columns) == ["a", "b", "c", "dev_loss", "dev_ppl"]


class TestCsv:
    def test_header_and_rows(self, records):
        lines = format_records(records, OutputFormat.CSV).splitlines()
        assert lines[0] == "k,dev_loss,dev_ppl,w_0,w_1"
        assert len(lines) == 3

    def test_missing_weights_are_blank(self, records):
        first_row = format_records(records).splitlines()[1]
        assert first_row == "1,0,1,,"

    def test_floats_round_trip(self, records):
        cells = format_records(records).splitlines()[2].split(",")
        assert float(cells[1]) == math.log(2)
        assert float(cells[2]) == records[1].dev_ppl
        assert cells[3:] == ["0.25", "0.75"]

    def test_seventeen_significant_digits(self):
        text = format_records([record({"tau": 0.1}, 0.5)])
        assert text.splitlines()[1].startswith("0.10000000000000001,")

    def test_unix_line_endings(self, records):
        text = format_records(records, "csv")
        assert "\r" not in text
        assert text.endswith("\n")


class TestJson:
    def test_records(self, records):
        payload = json.loads(format_records(records, OutputFormat.JSON))
        assert list(payload) == ["records"]
        assert payload["records"][0] == {"k": 1, "dev_loss": 0.0, "dev_ppl": 1.0}
        assert payload["records"][1]["w_1"] == 0.75

    def test_summary(self, records):
        text = format_records(records, "json", summary={"grid_spread": 0.5})
        assert json.loads(text)["summary"] == {"grid_spread": 0.5}


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_write_records(tmp_path, records, fmt):
    path = tmp_path / f"sweep.{fmt}"
    write_records(records, path, fmt)
    assert path.read_text(encoding="utf-8") == format_records(records, fmt)


def test_rejects_unknown_format(records):
    with pytest.raises(ValueError):
        format_records(records, "xlsx")
