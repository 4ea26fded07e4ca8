"""Embedded durable message broker: named queues, per-user permissions,
persistent FIFO delivery with acknowledgements.

Storage layout under the broker root:

    <root>/queues/<name>.log    one write-ahead log per durable queue
    <root>/users.json           broker user accounts and permissions

Delivery is at-least-once: a message delivered but never acked returns to
Ready on recovery; an acked message is never redelivered.  Ordering within a
queue is defined by the message id sequence (wall clocks are informational).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

from ..domain import ServiceRole, utc_now_iso
from ..errors import (
    CorruptLog,
    NotDelivered,
    PermissionDenied,
    QueueConflict,
    UnknownMessage,
    UnknownQueue,
    UnknownUser,
    UserConflict,
)
from .wal import AckRecord, PublishRecord, QueueLog, fsync_dir

log = logging.getLogger(__name__)

QUEUE_NAME_RE = re.compile(r"[a-z0-9][a-z0-9._-]{0,127}\Z")

# soft warning threshold for Ready backlog per queue
HIGH_WATERMARK = 1_000_000

# compaction: rewrite the log once more than half its publishes are acked
_COMPACT_MIN_ACKS = 32


@dataclass(frozen=True)
class BrokerUser:
    """A broker account.  Producers have no readable queue and may publish to
    any queue; consumers own exactly one queue they can read and ack."""

    username: str
    role: ServiceRole
    readable_queue: str | None = None
    is_admin: bool = False

    def __post_init__(self):
        if self.role is ServiceRole.PRODUCER and self.readable_queue is not None:
            raise ValueError("producers are not assigned a queue")
        if self.role is ServiceRole.CONSUMER and self.readable_queue is None:
            raise ValueError("consumers must own a queue")


@dataclass(frozen=True)
class ConsumedMessage:
    message_id: int
    body: bytes
    enqueued_at: str


@dataclass(frozen=True)
class QueueStats:
    depth: int
    unacked: int
    published: int
    acked: int


@dataclass(frozen=True)
class BrokerStats:
    queues: dict[str, QueueStats]
    total_published: int
    total_acked: int


@dataclass
class _Queue:
    name: str
    durable: bool
    log: QueueLog | None
    cond: threading.Condition = field(default_factory=threading.Condition)
    ready: "OrderedDict[int, tuple[bytes, str]]" = field(default_factory=OrderedDict)
    unacked: dict[int, tuple[bytes, str]] = field(default_factory=dict)
    acked_ids: set[int] = field(default_factory=set)
    next_id: int = 1
    published_total: int = 0
    acked_total: int = 0
    log_pub_count: int = 0
    log_ack_count: int = 0
    live: bool = True


def _hash_secret(secret: str) -> str:
    return hashlib.sha256(secret.encode("utf-8")).hexdigest()


class Broker:
    """Thread-safe embedded broker over a storage directory.

    Opening a directory from a previous run recovers all durable queues;
    messages that were delivered but unacked at the time of a crash come
    back as Ready.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.queues_dir = self.root / "queues"
        self.users_path = self.root / "users.json"
        self.queues_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._queues: dict[str, _Queue] = {}
        self._users: dict[str, dict] = {}
        self._load_users()
        for path in sorted(self.queues_dir.glob("*.log")):
            self._recover_queue(path)

    # -- recovery ----------------------------------------------------------

    def _recover_queue(self, path: Path) -> None:
        name = path.stem
        qlog, records = QueueLog.recover(path)
        pubs: "OrderedDict[int, tuple[bytes, str]]" = OrderedDict()
        acks: set[int] = set()
        for rec in records:
            if isinstance(rec, PublishRecord):
                if rec.message_id in pubs:
                    raise CorruptLog(f"{path}: duplicate publish id {rec.message_id}")
                pubs[rec.message_id] = (rec.body, rec.enqueued_at)
            elif isinstance(rec, AckRecord):
                if rec.message_id not in pubs:
                    log.warning("%s: ack for unknown id %d ignored", path, rec.message_id)
                    continue
                acks.add(rec.message_id)
        ready = OrderedDict(
            (mid, entry) for mid, entry in sorted(pubs.items()) if mid not in acks
        )
        q = _Queue(name=name, durable=True, log=qlog)
        q.ready = ready
        q.acked_ids = acks
        q.next_id = (max(pubs) if pubs else 0) + 1
        q.published_total = len(pubs)
        q.acked_total = len(acks)
        q.log_pub_count = len(pubs)
        q.log_ack_count = len(acks)
        self._queues[name] = q
        log.info("recovered queue %s: %d ready, %d acked", name, len(ready), len(acks))

    def _load_users(self) -> None:
        if not self.users_path.exists():
            return
        doc = json.loads(self.users_path.read_text(encoding="utf-8"))
        self._users = doc.get("users", {})

    def _save_users(self) -> None:
        tmp = self.users_path.with_suffix(".json.tmp")
        data = json.dumps({"users": self._users}, indent=1).encode("utf-8")
        with open(tmp, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, self.users_path)
        fsync_dir(self.root)

    # -- queue management ----------------------------------------------------

    def create_queue(self, name: str, durable: bool = True) -> None:
        if not QUEUE_NAME_RE.match(name):
            raise QueueConflict(f"invalid queue name {name!r}")
        with self._lock:
            existing = self._queues.get(name)
            if existing is not None:
                if existing.durable != durable:
                    raise QueueConflict(
                        f"queue {name!r} exists with durable={existing.durable}"
                    )
                return  # idempotent
            qlog = QueueLog(self.queues_dir / f"{name}.log") if durable else None
            self._queues[name] = _Queue(name=name, durable=durable, log=qlog)

    def delete_queue(self, name: str) -> None:
        with self._lock:
            q = self._queues.pop(name, None)
        if q is None:
            raise UnknownQueue(f"no queue {name!r}")
        with q.cond:
            q.live = False
            q.ready.clear()
            q.unacked.clear()
            if q.log is not None:
                q.log.delete()
            q.cond.notify_all()

    def queue_exists(self, name: str) -> bool:
        with self._lock:
            return name in self._queues

    def list_queues(self) -> list[str]:
        with self._lock:
            return sorted(self._queues)

    # -- user management ------------------------------------------------------

    def create_user(self, user: BrokerUser, secret: str) -> None:
        with self._lock:
            if user.username in self._users:
                raise UserConflict(f"broker user {user.username!r} exists")
            if user.readable_queue is not None:
                owner = next(
                    (u for u, rec in self._users.items() if rec.get("queue") == user.readable_queue),
                    None,
                )
                if owner is not None:
                    raise UserConflict(
                        f"queue {user.readable_queue!r} already owned by {owner!r}"
                    )
            self._users[user.username] = {
                "role": user.role.value,
                "queue": user.readable_queue,
                "admin": user.is_admin,
                "secret_sha256": _hash_secret(secret),
            }
            self._save_users()

    def delete_user(self, username: str) -> None:
        with self._lock:
            if username not in self._users:
                raise UnknownUser(f"no broker user {username!r}")
            del self._users[username]
            self._save_users()

    def update_user(self, username: str, new_username: str | None = None,
                    new_secret: str | None = None) -> None:
        with self._lock:
            rec = self._users.get(username)
            if rec is None:
                raise UnknownUser(f"no broker user {username!r}")
            if new_username is not None and new_username != username:
                if new_username in self._users:
                    raise UserConflict(f"broker user {new_username!r} exists")
                del self._users[username]
                self._users[new_username] = rec
            if new_secret is not None:
                rec["secret_sha256"] = _hash_secret(new_secret)
            self._save_users()

    def get_user(self, username: str) -> BrokerUser:
        with self._lock:
            rec = self._users.get(username)
        if rec is None:
            raise UnknownUser(f"no broker user {username!r}")
        return BrokerUser(
            username=username,
            role=ServiceRole(rec["role"]),
            readable_queue=rec["queue"],
            is_admin=rec["admin"],
        )

    def verify_user(self, username: str, secret: str) -> bool:
        with self._lock:
            rec = self._users.get(username)
        return rec is not None and rec["secret_sha256"] == _hash_secret(secret)

    def list_users(self) -> list[str]:
        with self._lock:
            return sorted(self._users)

    # -- messaging --------------------------------------------------------------

    def _queue(self, name: str) -> _Queue:
        with self._lock:
            q = self._queues.get(name)
        if q is None:
            raise UnknownQueue(f"no queue {name!r}")
        return q

    def _user_record(self, username: str) -> dict:
        with self._lock:
            rec = self._users.get(username)
        if rec is None:
            raise PermissionDenied(f"unknown broker user {username!r}")
        return rec

    def publish(self, as_user: str, queue: str, body: bytes) -> int:
        rec = self._user_record(as_user)
        if rec["role"] != ServiceRole.PRODUCER.value and not rec["admin"]:
            raise PermissionDenied(f"{as_user!r} may not publish")
        q = self._queue(queue)
        with q.cond:
            if not q.live:
                raise UnknownQueue(f"no queue {queue!r}")
            mid = q.next_id
            q.next_id += 1
            at = utc_now_iso()
            if q.log is not None:
                q.log.append_publish(mid, body, at)  # fsync before ack
            q.ready[mid] = (body, at)
            q.published_total += 1
            q.log_pub_count += 1
            if len(q.ready) == HIGH_WATERMARK:
                log.warning("queue %s reached %d ready messages", queue, HIGH_WATERMARK)
            q.cond.notify_all()
            return mid

    def consume(self, as_user: str, queue: str, max_messages: int = 1,
                wait: float = 0.0) -> list[ConsumedMessage]:
        """Return up to max_messages Ready messages in FIFO order, marking them
        delivered.  Blocks up to `wait` seconds when the queue is empty."""
        rec = self._user_record(as_user)
        if rec["role"] != ServiceRole.CONSUMER.value or rec["queue"] != queue:
            raise PermissionDenied(f"{as_user!r} may not consume {queue!r}")
        q = self._queue(queue)
        deadline = time.monotonic() + max(0.0, wait)
        with q.cond:
            while q.live and not q.ready:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    break
                q.cond.wait(remaining)
            if not q.live:
                raise UnknownQueue(f"no queue {queue!r}")
            batch: list[ConsumedMessage] = []
            while q.ready and len(batch) < max_messages:
                mid, (body, at) = q.ready.popitem(last=False)
                q.unacked[mid] = (body, at)
                batch.append(ConsumedMessage(mid, body, at))
            return batch

    def ack(self, as_user: str, queue: str, message_id: int) -> None:
        rec = self._user_record(as_user)
        if rec["role"] != ServiceRole.CONSUMER.value or rec["queue"] != queue:
            raise PermissionDenied(f"{as_user!r} may not ack on {queue!r}")
        q = self._queue(queue)
        with q.cond:
            if not q.live:
                raise UnknownQueue(f"no queue {queue!r}")
            if message_id in q.unacked:
                if q.log is not None:
                    q.log.append_ack(message_id)
                del q.unacked[message_id]
                q.acked_ids.add(message_id)
                q.acked_total += 1
                q.log_ack_count += 1
                self._maybe_compact(q)
            elif message_id in q.acked_ids:
                return  # double-ack: idempotent success
            elif message_id in q.ready:
                raise NotDelivered(f"message {message_id} not yet delivered")
            else:
                raise UnknownMessage(f"no message {message_id} on {queue!r}")

    def _maybe_compact(self, q: _Queue) -> None:
        # caller holds q.cond
        if q.log is None or q.log_ack_count < _COMPACT_MIN_ACKS:
            return
        if q.log_ack_count * 2 <= q.log_pub_count:
            return
        entries = sorted(
            [(mid, body, at) for mid, (body, at) in q.ready.items()]
            + [(mid, body, at) for mid, (body, at) in q.unacked.items()]
        )
        q.log.rewrite(entries)
        q.log_pub_count = len(entries)
        q.log_ack_count = 0
        log.debug("compacted queue %s to %d records", q.name, len(entries))

    def stats(self) -> BrokerStats:
        with self._lock:
            queues = list(self._queues.values())
        per_queue: dict[str, QueueStats] = {}
        total_pub = total_ack = 0
        for q in queues:
            with q.cond:
                per_queue[q.name] = QueueStats(
                    depth=len(q.ready),
                    unacked=len(q.unacked),
                    published=q.published_total,
                    acked=q.acked_total,
                )
                total_pub += q.published_total
                total_ack += q.acked_total
        return BrokerStats(queues=per_queue, total_published=total_pub, total_acked=total_ack)

    def close(self) -> None:
        with self._lock:
            for q in self._queues.values():
                with q.cond:
                    if q.log is not None:
                        q.log.close()
