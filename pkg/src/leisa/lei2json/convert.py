"""CSV -> event envelope conversion, with optional validate-and-publish.

Rows are isolated: a row that fails coercion or schema validation is
reported with its row number and skipped; the batch always runs to the end.
Dates may be given as bare YYYY-MM-DD (expanded to midnight UTC) or as full
RFC 3339 date-times.
"""

from __future__ import annotations

import csv
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ..domain import EventEnvelope, is_rfc3339
from ..errors import TargetUnreachable, UnknownEventType, UnreadableFile
from ..httpclient import HttpJsonClient
from ..schemas import SchemaDocument, load_schemas, validate
from .mapping import ColumnMapping, default_mapping

log = logging.getLogger(__name__)

_DATE_ONLY_RE = re.compile(r"\d{4}-\d{2}-\d{2}\Z")

_PIPELINE = 16


@dataclass(frozen=True)
class RowError:
    row: int
    message: str


@dataclass
class PublishSummary:
    converted: int = 0
    row_errors: list[RowError] = field(default_factory=list)
    validation_failed: int = 0
    published: int = 0
    publish_failed: int = 0
    aborted: str | None = None

    def as_dict(self) -> dict:
        return {
            "converted": self.converted,
            "rowErrors": len(self.row_errors),
            "validationFailed": self.validation_failed,
            "published": self.published,
            "publishFailed": self.publish_failed,
            "aborted": self.aborted,
        }


def _coerce(raw: str, kind: str) -> object:
    if kind == "number":
        return float(raw)
    if kind == "date-time":
        if _DATE_ONLY_RE.match(raw):
            return f"{raw}T00:00:00Z"
        if not is_rfc3339(raw):
            raise ValueError(f"not a date or RFC 3339 date-time: {raw!r}")
        return raw
    return raw


def _set_path(doc: dict, dotted: str, value: object) -> None:
    parts = dotted.split(".")
    node = doc
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def convert(csv_path: str | Path, event_type: str,
            mapping: ColumnMapping | None = None,
            registry: dict[str, SchemaDocument] | None = None,
            ) -> tuple[list[EventEnvelope], list[RowError]]:
    """Convert every data row to an envelope; bad rows become RowErrors.

    Row numbers count from 2 (the header is row 1).  Row count conservation:
    len(envelopes) + len(errors) == number of data rows.
    """
    registry = registry if registry is not None else load_schemas()
    schema = registry.get(event_type)
    if schema is None:
        raise UnknownEventType(f"no schema for event type {event_type!r}")
    mapping = mapping or default_mapping(event_type, schema)
    mapping.check_covers(schema)
    required = set(mapping.required_fields(schema))

    try:
        handle = open(csv_path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise UnreadableFile(f"{csv_path}: {exc}") from exc

    envelopes: list[EventEnvelope] = []
    errors: list[RowError] = []
    with handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise UnreadableFile(f"{csv_path}: missing header row")
        for line, row in enumerate(reader, start=2):
            problems: list[str] = []
            payload: dict = {}
            for header, spec in mapping.columns.items():
                raw = row.get(header)
                if raw is None or raw == "":
                    if spec.field.split(".")[0] in required:
                        problems.append(f"missing value for {header!r}")
                    continue
                try:
                    _set_path(payload, spec.field, _coerce(raw, spec.kind))
                except ValueError as exc:
                    problems.append(f"column {header!r}: {exc}")
            if not problems:
                env = EventEnvelope(event_type=event_type, payload=payload)
                result = validate(env, registry)
                if result.valid:
                    envelopes.append(env)
                else:
                    problems.extend(f"{v.path}: {v.rule}" for v in result.violations)
            if problems:
                errors.append(RowError(row=line, message="; ".join(problems)))
    return envelopes, errors


def convert_and_publish(csv_path: str | Path, event_type: str,
                        username: str, password: str, base_url: str,
                        mapping: ColumnMapping | None = None,
                        registry: dict[str, SchemaDocument] | None = None,
                        ) -> PublishSummary:
    """Run each converted row through the gateway's validator and publisher.

    Requests are pipelined up to 16 in flight; the summary reflects rows in
    their original order.  An auth or transport failure aborts the batch and
    is recorded once in the summary.
    """
    envelopes, row_errors = convert(csv_path, event_type, mapping, registry)
    summary = PublishSummary(converted=len(envelopes), row_errors=row_errors)

    def submit_one(client: HttpJsonClient, env: EventEnvelope) -> str:
        wire = {"eventType": env.event_type, "payload": env.payload}
        status, doc = client.request("POST", "/validate", body=wire)
        if status == 422:
            return "invalid"
        if status != 200:
            raise TargetUnreachable(f"/validate returned HTTP {status}: {doc}")
        status, doc = client.request("POST", f"/publish/{env.event_type}", body=wire,
                                     auth=(username, password))
        if status == 200:
            return "published"
        if status in (401, 403):
            raise TargetUnreachable(f"publish rejected: HTTP {status}: {doc}")
        return "publish_failed"

    clients = [HttpJsonClient(base_url) for _ in range(_PIPELINE)]
    try:
        with ThreadPoolExecutor(max_workers=_PIPELINE) as pool:
            for start in range(0, len(envelopes), _PIPELINE):
                batch = envelopes[start:start + _PIPELINE]
                futures = [
                    pool.submit(submit_one, clients[i], env)
                    for i, env in enumerate(batch)
                ]
                try:
                    outcomes = [f.result() for f in futures]
                except TargetUnreachable as exc:
                    summary.aborted = str(exc)
                    log.error("publish batch aborted: %s", exc)
                    return summary
                for outcome in outcomes:
                    if outcome == "published":
                        summary.published += 1
                    elif outcome == "invalid":
                        summary.validation_failed += 1
                    else:
                        summary.publish_failed += 1
    finally:
        for client in clients:
            client.close()
    return summary
