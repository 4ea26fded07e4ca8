"""Producer-controlled routing: (producer, event type) -> consumer queues.

Fan-out is stored as one row per consumer queue, so updates diff cleanly:
replacing a mapping set keeps the rows that stay, deletes the ones that
leave and inserts the ones that arrive.
"""

from __future__ import annotations

from dataclasses import dataclass

from .domain import EVENT_TYPE_RE, ServiceRole
from .errors import InvalidEventType, NotAProducer, UnknownConsumer
from .registry import ServiceRecord
from .store import Store


@dataclass(frozen=True)
class QueueMappingRecord:
    mapping_id: int
    producer_id: int
    event_type: str
    consumer_queue: str

    def as_dict(self) -> dict:
        return {
            "mappingId": self.mapping_id,
            "producerId": self.producer_id,
            "eventType": self.event_type,
            "consumerQueue": self.consumer_queue,
        }


def _rec(row) -> QueueMappingRecord:
    return QueueMappingRecord(
        mapping_id=row["mapping_id"],
        producer_id=row["producer_id"],
        event_type=row["event_type"],
        consumer_queue=row["consumer_queue"],
    )


class Routing:
    def __init__(self, store: Store):
        self.store = store

    def _consumer_queues(self, consumer_ids: list[int]) -> list[str]:
        """Resolve consumer service ids to their queue names, validating roles.

        Raises UnknownConsumer naming the first offending id; nothing is
        inserted in that case.
        """
        queues = []
        for cid in consumer_ids:
            row = self.store.query_one(
                "SELECT role, queue_name FROM service WHERE service_id = ?", (cid,)
            )
            if row is None or row["role"] != ServiceRole.CONSUMER.value:
                raise UnknownConsumer(f"service {cid} is not a registered consumer")
            queues.append(row["queue_name"])
        return queues

    def _owned(self, producer_id: int, event_type: str) -> list[QueueMappingRecord]:
        rows = self.store.query(
            "SELECT * FROM queue_mapping WHERE producer_id = ? AND event_type = ?"
            " ORDER BY mapping_id",
            (producer_id, event_type),
        )
        return [_rec(r) for r in rows]

    def set_queue_mapping(self, caller: ServiceRecord, event_type: str,
                          consumer_ids: list[int]) -> list[QueueMappingRecord]:
        if caller.role is not ServiceRole.PRODUCER:
            raise NotAProducer(f"service {caller.service_id} is not a producer")
        if not EVENT_TYPE_RE.match(event_type):
            raise InvalidEventType(f"invalid event type {event_type!r}")
        with self.store.lock:
            queues = self._consumer_queues(consumer_ids)
            for queue in queues:
                self.store.execute(
                    "INSERT OR IGNORE INTO queue_mapping"
                    " (producer_id, event_type, consumer_queue) VALUES (?, ?, ?)",
                    (caller.service_id, event_type, queue),
                )
            wanted = set(queues)
            return [m for m in self._owned(caller.service_id, event_type)
                    if m.consumer_queue in wanted]

    def update_queue_mapping(self, caller: ServiceRecord, event_type: str,
                             consumer_ids: list[int]) -> list[QueueMappingRecord]:
        """Replace semantics: the mapping set for event_type becomes exactly
        consumer_ids.  Rows that survive keep their mapping ids."""
        if caller.role is not ServiceRole.PRODUCER:
            raise NotAProducer(f"service {caller.service_id} is not a producer")
        if not EVENT_TYPE_RE.match(event_type):
            raise InvalidEventType(f"invalid event type {event_type!r}")
        with self.store.lock:
            queues = set(self._consumer_queues(consumer_ids))
            existing = {m.consumer_queue for m in self._owned(caller.service_id, event_type)}
            for queue in existing - queues:
                self.store.execute(
                    "DELETE FROM queue_mapping WHERE producer_id = ? AND event_type = ?"
                    " AND consumer_queue = ?",
                    (caller.service_id, event_type, queue),
                )
            for queue in queues - existing:
                self.store.execute(
                    "INSERT INTO queue_mapping (producer_id, event_type, consumer_queue)"
                    " VALUES (?, ?, ?)",
                    (caller.service_id, event_type, queue),
                )
            return self._owned(caller.service_id, event_type)

    def get_queue_mapping(self, caller: ServiceRecord) -> list[QueueMappingRecord]:
        if caller.is_admin:
            rows = self.store.query("SELECT * FROM queue_mapping ORDER BY mapping_id")
        elif caller.role is ServiceRole.PRODUCER:
            rows = self.store.query(
                "SELECT * FROM queue_mapping WHERE producer_id = ? ORDER BY mapping_id",
                (caller.service_id,),
            )
        else:
            rows = self.store.query(
                "SELECT * FROM queue_mapping WHERE consumer_queue = ? ORDER BY mapping_id",
                (caller.queue_name,),
            )
        return [_rec(r) for r in rows]

    def delete_queue_mapping(self, caller: ServiceRecord,
                             event_type: str | None = None) -> int:
        if caller.role is not ServiceRole.PRODUCER:
            raise NotAProducer(f"service {caller.service_id} is not a producer")
        if event_type is None:
            cur = self.store.execute(
                "DELETE FROM queue_mapping WHERE producer_id = ?", (caller.service_id,)
            )
        else:
            cur = self.store.execute(
                "DELETE FROM queue_mapping WHERE producer_id = ? AND event_type = ?",
                (caller.service_id, event_type),
            )
        return cur.rowcount

    def resolve(self, producer_id: int, event_type: str) -> list[str]:
        """Consumer queues mapped for (producer, event type), sorted by name."""
        rows = self.store.query(
            "SELECT consumer_queue FROM queue_mapping"
            " WHERE producer_id = ? AND event_type = ? ORDER BY consumer_queue",
            (producer_id, event_type),
        )
        return [r["consumer_queue"] for r in rows]
