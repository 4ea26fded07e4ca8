"""Column mappings: CSV header -> payload field path + scalar coercion.

A mapping file looks like:

    {
      "event": "weightEvent",
      "columns": {
        "Animal": {"field": "animalId", "type": "string"},
        "Weighed At": {"field": "eventDateTime", "type": "date-time"},
        "Kg": {"field": "weightKg", "type": "number"}
      }
    }

Field paths may be dotted to build nested payload objects.  Without a file,
the identity mapping is derived from the event's schema: every top-level
property maps to a column of the same name with its type taken from the
schema rules.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from ..errors import UnknownEventType, UnreadableFile
from ..schemas import SchemaDocument

COERCIONS = ("string", "number", "date-time")


@dataclass(frozen=True)
class ColumnSpec:
    field: str
    kind: str


@dataclass(frozen=True)
class ColumnMapping:
    event_type: str
    columns: Mapping[str, ColumnSpec]

    def required_fields(self, schema: SchemaDocument) -> list[str]:
        return list(schema.rules.get("required", []))

    def check_covers(self, schema: SchemaDocument) -> None:
        mapped = {spec.field.split(".")[0] for spec in self.columns.values()}
        missing = [name for name in self.required_fields(schema) if name not in mapped]
        if missing:
            raise UnreadableFile(
                f"mapping for {self.event_type!r} lacks required fields {missing}")


def _kind_from_rules(rules: Mapping) -> str:
    if rules.get("format") == "date-time":
        return "date-time"
    if rules.get("type") in ("number", "integer"):
        return "number"
    return "string"


def default_mapping(event_type: str, schema: SchemaDocument) -> ColumnMapping:
    columns = {
        name: ColumnSpec(field=name, kind=_kind_from_rules(rules))
        for name, rules in schema.rules.get("properties", {}).items()
    }
    return ColumnMapping(event_type=event_type, columns=columns)


def load_mapping(path: str | Path) -> ColumnMapping:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UnreadableFile(f"{path}: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("columns"), dict):
        raise UnreadableFile(f"{path}: expected an object with a 'columns' map")
    event_type = doc.get("event")
    if not isinstance(event_type, str):
        raise UnknownEventType(f"{path}: missing 'event' name")
    columns = {}
    for header, spec in doc["columns"].items():
        if not isinstance(spec, dict) or "field" not in spec:
            raise UnreadableFile(f"{path}: column {header!r} needs a 'field'")
        kind = spec.get("type", "string")
        if kind not in COERCIONS:
            raise UnreadableFile(f"{path}: column {header!r} has unknown type {kind!r}")
        columns[header] = ColumnSpec(field=str(spec["field"]), kind=kind)
    return ColumnMapping(event_type=event_type, columns=columns)
