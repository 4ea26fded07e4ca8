"""CSV conversion: coercion, row isolation, round-trips and publish flows."""

import csv
import json

import pytest

from leisa.domain import EventEnvelope
from leisa.errors import UnknownEventType, UnreadableFile
from leisa.lei2json import (
    convert,
    convert_and_publish,
    default_mapping,
    load_mapping,
)
from leisa.lei2json.cli import main as lei2json_main
from leisa.schemas import load_schemas, validate

from conftest import PASSWORD

REGISTRY = load_schemas()

WEIGHT_HEADER = ["animalId", "eventDateTime", "weightKg"]


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def weight_rows(count, start=0):
    return [
        [f"AU{i:05d}", "2024-01-05T06:00:00Z", str(100.0 + i)]
        for i in range(start, start + count)
    ]


def test_default_mapping_covers_schema():
    mapping = default_mapping("weightEvent", REGISTRY["weightEvent"])
    assert set(mapping.columns) == {"animalId", "eventDateTime", "weightKg"}
    assert mapping.columns["weightKg"].kind == "number"
    assert mapping.columns["eventDateTime"].kind == "date-time"
    assert mapping.columns["animalId"].kind == "string"


def test_convert_three_rows(tmp_path):
    path = write_csv(tmp_path / "w.csv", WEIGHT_HEADER, weight_rows(3))
    envelopes, errors = convert(path, "weightEvent")
    assert len(envelopes) == 3 and errors == []
    assert envelopes[0].payload == {
        "animalId": "AU00000",
        "eventDateTime": "2024-01-05T06:00:00Z",
        "weightKg": 100.0,
    }
    assert all(validate(e, REGISTRY).valid for e in envelopes)


def test_bad_row_is_isolated(tmp_path):
    rows = weight_rows(3)
    rows[1][2] = "abc"
    path = write_csv(tmp_path / "w.csv", WEIGHT_HEADER, rows)
    envelopes, errors = convert(path, "weightEvent")
    assert len(envelopes) == 2
    assert len(errors) == 1 and errors[0].row == 3
    assert "weightKg" in errors[0].message


def test_header_only_csv(tmp_path):
    path = write_csv(tmp_path / "w.csv", WEIGHT_HEADER, [])
    envelopes, errors = convert(path, "weightEvent")
    assert envelopes == [] and errors == []


def test_date_only_expands_to_midnight_utc(tmp_path):
    path = write_csv(tmp_path / "w.csv", WEIGHT_HEADER,
                     [["AU1", "2024-01-05", "10"]])
    envelopes, errors = convert(path, "weightEvent")
    assert errors == []
    assert envelopes[0].payload["eventDateTime"] == "2024-01-05T00:00:00Z"


def test_garbage_date_is_row_error(tmp_path):
    path = write_csv(tmp_path / "w.csv", WEIGHT_HEADER,
                     [["AU1", "05/01/2024", "10"]])
    envelopes, errors = convert(path, "weightEvent")
    assert envelopes == [] and len(errors) == 1


def test_missing_required_value_is_row_error(tmp_path):
    path = write_csv(tmp_path / "w.csv", WEIGHT_HEADER, [["", "2024-01-05", "10"]])
    envelopes, errors = convert(path, "weightEvent")
    assert envelopes == [] and "animalId" in errors[0].message


def test_optional_column_may_be_empty(tmp_path):
    header = ["animalId", "eventDateTime", "treatment", "doseMl"]
    path = write_csv(tmp_path / "t.csv", header,
                     [["AU1", "2024-02-01", "drench", ""],
                      ["AU2", "2024-02-01", "vaccine", "12.5"]])
    envelopes, errors = convert(path, "treatmentEvent")
    assert errors == []
    assert "doseMl" not in envelopes[0].payload
    assert envelopes[1].payload["doseMl"] == 12.5


def test_schema_violating_row_is_rejected(tmp_path):
    # coercion succeeds (a number) but the schema forbids negatives
    path = write_csv(tmp_path / "w.csv", WEIGHT_HEADER, [["AU1", "2024-01-05", "-4"]])
    envelopes, errors = convert(path, "weightEvent")
    assert envelopes == []
    assert "$.weightKg" in errors[0].message


def test_unknown_event_type(tmp_path):
    path = write_csv(tmp_path / "w.csv", WEIGHT_HEADER, weight_rows(1))
    with pytest.raises(UnknownEventType):
        convert(path, "mysteryEvent")


def test_unreadable_file(tmp_path):
    with pytest.raises(UnreadableFile):
        convert(tmp_path / "absent.csv", "weightEvent")


def test_custom_mapping_file(tmp_path):
    mapping_path = tmp_path / "map.json"
    mapping_path.write_text(json.dumps({
        "event": "weightEvent",
        "columns": {
            "Tag": {"field": "animalId", "type": "string"},
            "When": {"field": "eventDateTime", "type": "date-time"},
            "Kg": {"field": "weightKg", "type": "number"},
        },
    }))
    mapping = load_mapping(mapping_path)
    path = write_csv(tmp_path / "w.csv", ["Tag", "When", "Kg"],
                     [["AU9", "2024-03-01", "250.5"]])
    envelopes, errors = convert(path, "weightEvent", mapping)
    assert errors == []
    assert envelopes[0].payload == {
        "animalId": "AU9", "eventDateTime": "2024-03-01T00:00:00Z", "weightKg": 250.5}


def test_mapping_must_cover_required_fields(tmp_path):
    mapping_path = tmp_path / "map.json"
    mapping_path.write_text(json.dumps({
        "event": "weightEvent",
        "columns": {"Tag": {"field": "animalId", "type": "string"}},
    }))
    path = write_csv(tmp_path / "w.csv", ["Tag"], [["AU9"]])
    with pytest.raises(UnreadableFile):
        convert(path, "weightEvent", load_mapping(mapping_path))


def test_round_trip_from_envelopes(tmp_path):
    originals = [
        EventEnvelope("weightEvent", {
            "animalId": f"AU{i}",
            "eventDateTime": "2024-01-05T06:00:00Z",
            "weightKg": 100.0 + i / 4,
        })
        for i in range(50)
    ]
    rows = [[e.payload["animalId"], e.payload["eventDateTime"],
             repr(e.payload["weightKg"])] for e in originals]
    path = write_csv(tmp_path / "w.csv", WEIGHT_HEADER, rows)
    envelopes, errors = convert(path, "weightEvent")
    assert errors == []
    assert [e.payload for e in envelopes] == [e.payload for e in originals]


def test_row_count_conservation(tmp_path):
    rows = weight_rows(20)
    for i in (3, 7, 11):
        rows[i][2] = "not-a-number"
    path = write_csv(tmp_path / "w.csv", WEIGHT_HEADER, rows)
    envelopes, errors = convert(path, "weightEvent")
    assert len(envelopes) + len(errors) == 20


def test_cli_convert_writes_jsonl(tmp_path, capsys):
    path = write_csv(tmp_path / "w.csv", WEIGHT_HEADER, weight_rows(4))
    out = tmp_path / "events.jsonl"
    code = lei2json_main(["convert", "--in", str(path), "--event", "weightEvent",
                          "--out", str(out)])
    assert code == 0
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 4
    first = json.loads(lines[0])
    assert first["eventType"] == "weightEvent"
    assert "converted 4 rows" in capsys.readouterr().out


# --- publish integration -----------------------------------------------------------

def setup_route(stack, consumers=2):
    stack.register("csv-prod", "producer")
    ids = []
    for i in range(consumers):
        record = stack.register(f"csv-cons-{i}", "consumer")
        ids.append(record)
    status, _ = stack.client.request(
        "POST", "/mappings",
        body={"eventType": "weightEvent", "consumerIds": [r["serviceId"] for r in ids]},
        auth=("csv-prod", PASSWORD))
    assert status == 200
    return ids


def test_convert_and_publish_end_to_end(stack, tmp_path):
    consumers = setup_route(stack, consumers=2)
    path = write_csv(tmp_path / "w.csv", WEIGHT_HEADER, weight_rows(30))
    summary = convert_and_publish(
        path, "weightEvent", "csv-prod", PASSWORD, stack.base_url)
    assert summary.aborted is None
    assert summary.converted == 30
    assert summary.published == 30
    assert summary.validation_failed == 0 and summary.publish_failed == 0
    for record in consumers:
        assert stack.app.broker.stats().queues[record["queueName"]].depth == 30


def test_convert_and_publish_counts_reconcile(stack, tmp_path):
    setup_route(stack, consumers=1)
    rows = weight_rows(10)
    rows[4][2] = "oops"  # row error, never converted
    path = write_csv(tmp_path / "w.csv", WEIGHT_HEADER, rows)
    summary = convert_and_publish(
        path, "weightEvent", "csv-prod", PASSWORD, stack.base_url)
    assert summary.converted == 9
    assert len(summary.row_errors) == 1
    assert summary.converted == summary.published + summary.publish_failed \
        + summary.validation_failed
    assert summary.published == 9


def test_convert_and_publish_bad_credentials_aborts_once(stack, tmp_path):
    setup_route(stack, consumers=1)
    path = write_csv(tmp_path / "w.csv", WEIGHT_HEADER, weight_rows(10))
    summary = convert_and_publish(
        path, "weightEvent", "csv-prod", "wrong-password", stack.base_url)
    assert summary.published == 0
    assert summary.aborted is not None
    assert "401" in summary.aborted
