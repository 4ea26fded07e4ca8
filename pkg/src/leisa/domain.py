"""Core shared types: the event envelope and its wire format.

An event travels as a JSON object ``{"eventType": <string>, "payload": <object>}``.
The event type may also arrive out-of-band (e.g. in the URL path); when both
are present they must agree.  Timestamps are RFC 3339 UTC strings throughout.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Mapping

from .errors import (
    EventTypeMismatch,
    InvalidEventType,
    MalformedJson,
    MissingEventType,
    NotAnObject,
)

EVENT_TYPE_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")

# RFC 3339 date-time with mandatory offset ("Z" or +-hh:mm).
_RFC3339_RE = re.compile(
    r"\d{4}-\d{2}-\d{2}[Tt]\d{2}:\d{2}:\d{2}(\.\d+)?([Zz]|[+-]\d{2}:\d{2})\Z"
)


class ServiceRole(enum.Enum):
    PRODUCER = "producer"
    CONSUMER = "consumer"


@dataclass(frozen=True)
class Credentials:
    """Login credentials for a registered service.

    The password is held in memory only; storage layers keep a salted hash.
    """

    username: str
    password: str = field(repr=False)


@dataclass(frozen=True)
class EventEnvelope:
    """A livestock event message: type tag plus a JSON object payload.

    ``received_at`` is ingress metadata and is not part of the wire form;
    round-tripping through serialize/parse preserves event_type and payload
    but assigns a fresh ``received_at``.
    """

    event_type: str
    payload: Mapping[str, Any]
    received_at: datetime = field(compare=False, default_factory=lambda: datetime.now(timezone.utc))

    def __post_init__(self):
        if not EVENT_TYPE_RE.match(self.event_type or ""):
            raise InvalidEventType(f"invalid event type {self.event_type!r}")
        if not isinstance(self.payload, dict):
            raise NotAnObject("payload must be a JSON object")


def utc_now_iso() -> str:
    """Current time as an RFC 3339 UTC string with a trailing Z."""
    return datetime.now(timezone.utc).isoformat(timespec="microseconds").replace("+00:00", "Z")


def is_rfc3339(value: Any) -> bool:
    """True when value is an RFC 3339 date-time string with an explicit offset."""
    if not isinstance(value, str) or not _RFC3339_RE.match(value):
        return False
    try:
        datetime.fromisoformat(value.replace("Z", "+00:00").replace("z", "+00:00"))
    except ValueError:
        return False
    return True


def _decode_document(raw: bytes) -> Any:
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedJson(f"body is not UTF-8: {exc}", offset=exc.start) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"invalid JSON at offset {exc.pos}: {exc.msg}", offset=exc.pos) from exc


def parse_envelope(raw: bytes) -> EventEnvelope:
    """Parse the wire form ``{"eventType": ..., "payload": {...}}``.

    Total over arbitrary byte input: returns an envelope or raises one of the
    typed envelope errors, never anything else.
    """
    doc = _decode_document(raw)
    if not isinstance(doc, dict):
        raise NotAnObject("top-level JSON value must be an object")
    if "eventType" not in doc:
        raise MissingEventType("envelope has no eventType")
    event_type = doc["eventType"]
    if not isinstance(event_type, str) or not EVENT_TYPE_RE.match(event_type):
        raise InvalidEventType(f"invalid event type {event_type!r}")
    payload = doc.get("payload")
    if not isinstance(payload, dict):
        raise NotAnObject("payload is missing or not a JSON object")
    return EventEnvelope(event_type=event_type, payload=payload)


def assemble_envelope(raw: bytes, event_type: str | None = None) -> EventEnvelope:
    """Build an envelope from a request body plus an optional out-of-band type.

    Accepts either the full wire form or a bare payload object.  A body is
    treated as the wire form when it carries both ``eventType`` and
    ``payload`` keys; anything else is a bare payload and requires
    ``event_type``.  When both sources name a type they must agree.
    """
    doc = _decode_document(raw)
    if not isinstance(doc, dict):
        raise NotAnObject("top-level JSON value must be an object")

    if "eventType" in doc and "payload" in doc:
        env = parse_envelope(raw)
        if event_type is not None and event_type != env.event_type:
            raise EventTypeMismatch(
                f"event type {event_type!r} does not match envelope {env.event_type!r}"
            )
        return env

    if event_type is None:
        raise MissingEventType("no eventType in body or request")
    if not EVENT_TYPE_RE.match(event_type):
        raise InvalidEventType(f"invalid event type {event_type!r}")
    return EventEnvelope(event_type=event_type, payload=doc)


def serialize_envelope(env: EventEnvelope) -> bytes:
    """Canonical UTF-8 JSON wire form of an envelope."""
    return json.dumps(
        {"eventType": env.event_type, "payload": env.payload},
        ensure_ascii=False,
        separators=(",", ":"),
    ).encode("utf-8")
