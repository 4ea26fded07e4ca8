"""Per-event-type payload validation against a bounded JSON-Schema-style subset.

Supported keywords: ``type``, ``required``, ``properties``, ``enum``,
``pattern``, ``minimum``/``maximum`` (inclusive), ``items`` and
``format: date-time``.  Anything else in a schema file is rejected at load
time rather than silently ignored.

Validation never raises for bad payloads; all failures are reported as
violations, in document order, with JSON paths like ``$.animalId`` or
``$.readings[2].value``.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .domain import EventEnvelope, is_rfc3339
from .errors import UnreadableSchema

log = logging.getLogger(__name__)

_KEYWORDS = {"type", "required", "properties", "enum", "pattern", "minimum", "maximum", "items", "format"}
_TYPES = {"object", "array", "string", "number", "integer", "boolean", "null"}

# Default schemas for the three event families every deployment understands.
BUILTIN_SCHEMAS: dict[str, dict] = {
    "weightEvent": {
        "type": "object",
        "required": ["animalId", "eventDateTime", "weightKg"],
        "properties": {
            "animalId": {"type": "string"},
            "eventDateTime": {"type": "string", "format": "date-time"},
            "weightKg": {"type": "number", "minimum": 0},
        },
    },
    "treatmentEvent": {
        "type": "object",
        "required": ["animalId", "eventDateTime", "treatment"],
        "properties": {
            "animalId": {"type": "string"},
            "eventDateTime": {"type": "string", "format": "date-time"},
            "treatment": {"type": "string"},
            "doseMl": {"type": "number", "minimum": 0},
        },
    },
    "locationEvent": {
        "type": "object",
        "required": ["animalId", "eventDateTime", "latitude", "longitude"],
        "properties": {
            "animalId": {"type": "string"},
            "eventDateTime": {"type": "string", "format": "date-time"},
            "latitude": {"type": "number", "minimum": -90, "maximum": 90},
            "longitude": {"type": "number", "minimum": -180, "maximum": 180},
        },
    },
}


@dataclass(frozen=True)
class Violation:
    path: str
    rule: str
    message: str

    def as_dict(self) -> dict:
        return {"path": self.path, "rule": self.rule, "message": self.message}


@dataclass(frozen=True)
class ValidationResult:
    valid: bool
    violations: tuple[Violation, ...]

    def as_dict(self) -> dict:
        return {"valid": self.valid, "violations": [v.as_dict() for v in self.violations]}


@dataclass(frozen=True)
class SchemaDocument:
    event_type: str
    rules: Mapping[str, Any]


def _check_rules(rules: Any, where: str) -> None:
    """Reject anything outside the supported keyword subset."""
    if not isinstance(rules, dict):
        raise UnreadableSchema(f"{where}: rule node must be an object")
    unknown = set(rules) - _KEYWORDS
    if unknown:
        raise UnreadableSchema(f"{where}: unsupported keywords {sorted(unknown)}")
    if "type" in rules and rules["type"] not in _TYPES:
        raise UnreadableSchema(f"{where}: unknown type {rules['type']!r}")
    if "required" in rules:
        req = rules["required"]
        if not isinstance(req, list) or not all(isinstance(x, str) for x in req):
            raise UnreadableSchema(f"{where}: required must be a list of names")
        props = rules.get("properties", {})
        missing = [name for name in req if name not in props]
        if missing:
            raise UnreadableSchema(f"{where}: required names missing from properties: {missing}")
    if "properties" in rules:
        if not isinstance(rules["properties"], dict):
            raise UnreadableSchema(f"{where}: properties must be an object")
        for name, sub in rules["properties"].items():
            _check_rules(sub, f"{where}.{name}")
    if "enum" in rules and not isinstance(rules["enum"], list):
        raise UnreadableSchema(f"{where}: enum must be a list")
    if "pattern" in rules:
        try:
            re.compile(rules["pattern"])
        except (re.error, TypeError) as exc:
            raise UnreadableSchema(f"{where}: bad pattern: {exc}") from exc
    for bound in ("minimum", "maximum"):
        if bound in rules and not isinstance(rules[bound], (int, float)):
            raise UnreadableSchema(f"{where}: {bound} must be a number")
    if "items" in rules:
        _check_rules(rules["items"], f"{where}[]")
    if "format" in rules and rules["format"] != "date-time":
        raise UnreadableSchema(f"{where}: unsupported format {rules['format']!r}")


def load_schemas(directory: str | Path | None = None) -> dict[str, SchemaDocument]:
    """Build the schema registry: built-ins plus any ``<eventType>.json`` files.

    A directory file with a built-in's name overrides the built-in.  A file
    that is not a valid rule tree fails the load; schemas are never skipped
    silently.
    """
    registry = {
        name: SchemaDocument(event_type=name, rules=rules)
        for name, rules in BUILTIN_SCHEMAS.items()
    }
    if directory is None:
        return registry
    directory = Path(directory)
    for path in sorted(directory.glob("*.json")):
        event_type = path.stem
        try:
            rules = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UnreadableSchema(f"{path}: {exc}") from exc
        _check_rules(rules, event_type)
        registry[event_type] = SchemaDocument(event_type=event_type, rules=rules)
        log.debug("loaded schema %s from %s", event_type, path)
    return registry


def _type_of(value: Any) -> str:
    # bool must not satisfy number/integer
    if isinstance(value, bool):
        return "boolean"
    if value is None:
        return "null"
    if isinstance(value, str):
        return "string"
    if isinstance(value, int):
        return "integer"
    if isinstance(value, float):
        return "number"
    if isinstance(value, list):
        return "array"
    if isinstance(value, dict):
        return "object"
    return type(value).__name__


def _type_matches(value: Any, expected: str) -> bool:
    actual = _type_of(value)
    if expected == "number":
        return actual in ("number", "integer")
    return actual == expected


def _enum_member(value: Any, options: list) -> bool:
    # exact membership; bool is not interchangeable with 0/1
    for opt in options:
        if isinstance(opt, bool) != isinstance(value, bool):
            continue
        if opt == value:
            return True
    return False


def _walk(value: Any, rules: Mapping[str, Any], path: str, out: list[Violation]) -> None:
    if "type" in rules and not _type_matches(value, rules["type"]):
        out.append(Violation(path, "type", f"expected {rules['type']}, got {_type_of(value)}"))
        return  # remaining keywords are meaningless on the wrong type

    if "enum" in rules and not _enum_member(value, rules["enum"]):
        out.append(Violation(path, "enum", f"value not one of {rules['enum']}"))

    if isinstance(value, str):
        if "pattern" in rules and not re.search(rules["pattern"], value):
            out.append(Violation(path, "pattern", f"value does not match /{rules['pattern']}/"))
        if rules.get("format") == "date-time" and not is_rfc3339(value):
            out.append(Violation(path, "format", "not an RFC 3339 date-time"))

    if isinstance(value, (int, float)) and not isinstance(value, bool):
        if "minimum" in rules and value < rules["minimum"]:
            out.append(Violation(path, "minimum", f"{value} < {rules['minimum']}"))
        if "maximum" in rules and value > rules["maximum"]:
            out.append(Violation(path, "maximum", f"{value} > {rules['maximum']}"))

    if isinstance(value, dict):
        props = rules.get("properties", {})
        for name in rules.get("required", []):
            if name not in value:
                out.append(Violation(f"{path}.{name}", "required", f"missing required field {name!r}"))
        # document order: payload keys as written
        for key, sub_value in value.items():
            if key in props:
                _walk(sub_value, props[key], f"{path}.{key}", out)

    if isinstance(value, list) and "items" in rules:
        for i, item in enumerate(value):
            _walk(item, rules["items"], f"{path}[{i}]", out)


def validate(env: EventEnvelope, registry: Mapping[str, SchemaDocument]) -> ValidationResult:
    """Validate an envelope's payload against the schema for its event type.

    Deterministic, reports every violation, and treats an unknown event type
    as a violation rather than an error.
    """
    schema = registry.get(env.event_type)
    if schema is None:
        result = ValidationResult(
            valid=False,
            violations=(Violation("$", "schema", f"no schema registered for event type {env.event_type!r}"),),
        )
        log.debug("validate %s: unknown event type", env.event_type)
        return result
    out: list[Violation] = []
    _walk(env.payload, schema.rules, "$", out)
    result = ValidationResult(valid=not out, violations=tuple(out))
    if out:
        log.debug("validate %s: %d violation(s)", env.event_type, len(out))
    return result
