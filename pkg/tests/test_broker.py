"""Broker behaviour: queues, users, FIFO delivery, permissions, stats."""

import random
import threading
import time

import pytest

from leisa.broker import Broker, BrokerUser
from leisa.domain import ServiceRole
from leisa.errors import (
    NotDelivered,
    PermissionDenied,
    QueueConflict,
    UnknownMessage,
    UnknownQueue,
    UserConflict,
)

PRODUCER = BrokerUser("prod", ServiceRole.PRODUCER)
ADMIN = BrokerUser("root", ServiceRole.PRODUCER, is_admin=True)


def consumer(name, queue):
    return BrokerUser(name, ServiceRole.CONSUMER, readable_queue=queue)


@pytest.fixture
def loaded(broker):
    broker.create_queue("q1")
    broker.create_user(PRODUCER, "pw")
    broker.create_user(consumer("cons", "q1"), "pw")
    return broker


# --- queue management ---------------------------------------------------

def test_create_queue_idempotent(broker):
    broker.create_queue("consumer-42")
    broker.create_queue("consumer-42")
    assert broker.stats().queues["consumer-42"].depth == 0


def test_create_queue_settings_conflict(broker):
    broker.create_queue("consumer-42", durable=True)
    with pytest.raises(QueueConflict):
        broker.create_queue("consumer-42", durable=False)


def test_bad_queue_name(broker):
    with pytest.raises(QueueConflict):
        broker.create_queue("Not_Valid!")


def test_delete_queue_twice(broker):
    broker.create_queue("q")
    broker.delete_queue("q")
    with pytest.raises(UnknownQueue):
        broker.delete_queue("q")


def test_user_model_invariants():
    with pytest.raises(ValueError):
        BrokerUser("x", ServiceRole.PRODUCER, readable_queue="q")
    with pytest.raises(ValueError):
        BrokerUser("x", ServiceRole.CONSUMER)


def test_duplicate_user(broker):
    broker.create_user(PRODUCER, "pw")
    with pytest.raises(UserConflict):
        broker.create_user(PRODUCER, "pw2")


def test_queue_exclusive_ownership(broker):
    broker.create_queue("q1")
    broker.create_user(consumer("a", "q1"), "pw")
    with pytest.raises(UserConflict):
        broker.create_user(consumer("b", "q1"), "pw")


# --- publish / consume / ack ----------------------------------------------

def test_publish_ids_monotonic(loaded):
    assert loaded.publish("prod", "q1", b"a") == 1
    assert loaded.publish("prod", "q1", b"b") == 2


def test_publish_unknown_queue(loaded):
    with pytest.raises(UnknownQueue):
        loaded.publish("prod", "nope", b"x")


def test_fifo_prefix(loaded):
    for body in (b"a", b"b", b"c"):
        loaded.publish("prod", "q1", body)
    batch = loaded.consume("cons", "q1", max_messages=2)
    assert [m.body for m in batch] == [b"a", b"b"]
    stats = loaded.stats().queues["q1"]
    assert stats.depth == 1 and stats.unacked == 2


def test_empty_queue_times_out(loaded):
    t0 = time.monotonic()
    assert loaded.consume("cons", "q1", max_messages=1, wait=0.1) == []
    assert 0.08 <= time.monotonic() - t0 < 1.0


def test_consume_wakes_on_publish(loaded):
    got = []

    def consume():
        got.extend(loaded.consume("cons", "q1", max_messages=1, wait=5))

    t = threading.Thread(target=consume)
    t.start()
    time.sleep(0.05)
    loaded.publish("prod", "q1", b"ping")
    t.join(timeout=2)
    assert [m.body for m in got] == [b"ping"]


def test_ack_lifecycle(loaded):
    mid = loaded.publish("prod", "q1", b"a")
    with pytest.raises(NotDelivered):
        loaded.ack("cons", "q1", mid)
    loaded.consume("cons", "q1")
    loaded.ack("cons", "q1", mid)
    loaded.ack("cons", "q1", mid)  # idempotent
    with pytest.raises(UnknownMessage):
        loaded.ack("cons", "q1", 999)
    stats = loaded.stats().queues["q1"]
    assert (stats.depth, stats.unacked, stats.acked) == (0, 0, 1)


def test_acked_never_redelivered(loaded):
    for body in (b"a", b"b"):
        loaded.publish("prod", "q1", body)
    first = loaded.consume("cons", "q1")[0]
    loaded.ack("cons", "q1", first.message_id)
    remaining = loaded.consume("cons", "q1", max_messages=10)
    assert [m.body for m in remaining] == [b"b"]


def test_stats_progression(loaded):
    fresh = loaded.stats()
    assert fresh.total_published == 0 and fresh.total_acked == 0
    for _ in range(3):
        loaded.publish("prod", "q1", b"x")
    assert loaded.stats().queues["q1"].depth == 3
    mid = loaded.consume("cons", "q1")[0].message_id
    loaded.ack("cons", "q1", mid)
    stats = loaded.stats().queues["q1"]
    assert (stats.depth, stats.acked) == (2, 1)


# --- permission matrix -------------------------------------------------------

def test_permission_matrix(broker):
    broker.create_queue("qa")
    broker.create_queue("qb")
    broker.create_user(PRODUCER, "pw")
    broker.create_user(ADMIN, "pw")
    broker.create_user(consumer("ca", "qa"), "pw")
    broker.create_user(consumer("cb", "qb"), "pw")
    broker.publish("prod", "qa", b"m1")
    broker.publish("prod", "qb", b"m2")

    # producers publish anywhere, never read or ack
    with pytest.raises(PermissionDenied):
        broker.consume("prod", "qa")
    with pytest.raises(PermissionDenied):
        broker.ack("prod", "qa", 1)

    # consumers read and ack only their own queue, never publish
    with pytest.raises(PermissionDenied):
        broker.publish("ca", "qa", b"x")
    with pytest.raises(PermissionDenied):
        broker.consume("ca", "qb")
    with pytest.raises(PermissionDenied):
        broker.ack("ca", "qb", 1)
    assert broker.consume("ca", "qa")[0].body == b"m1"

    # admins may publish; unknown principals are denied outright
    broker.publish("root", "qa", b"x")
    with pytest.raises(PermissionDenied):
        broker.publish("ghost", "qa", b"x")


# --- isolation over randomized schedules ---------------------------------------

def test_queue_isolation_randomized(broker):
    rng = random.Random(77)
    queues = [f"iso-{i}" for i in range(10)]
    broker.create_user(PRODUCER, "pw")
    expected = {}
    for i, q in enumerate(queues):
        broker.create_queue(q)
        broker.create_user(consumer(f"c{i}", q), "pw")
        expected[q] = []
    for step in range(400):
        q = rng.choice(queues)
        body = f"{q}:{step}".encode()
        broker.publish("prod", q, body)
        expected[q].append(body)
    for i, q in enumerate(queues):
        got = [m.body for m in broker.consume(f"c{i}", q, max_messages=1000)]
        assert got == expected[q]
        assert all(b.decode().split(":")[0] == q for b in got)


def test_single_consumer_concurrent_fetches_no_duplicates(loaded):
    for i in range(200):
        loaded.publish("prod", "q1", str(i).encode())
    seen = []
    lock = threading.Lock()

    def fetch():
        while True:
            batch = loaded.consume("cons", "q1", max_messages=7)
            if not batch:
                return
            with lock:
                seen.extend(m.message_id for m in batch)

    threads = [threading.Thread(target=fetch) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(seen) == list(range(1, 201))
    assert len(set(seen)) == 200


def test_delete_queue_aborts_blocked_consume(loaded):
    result = {}

    def blocked():
        try:
            loaded.consume("cons", "q1", wait=10)
        except UnknownQueue:
            result["aborted"] = True

    t = threading.Thread(target=blocked)
    t.start()
    time.sleep(0.1)
    loaded.delete_queue("q1")
    t.join(timeout=2)
    assert result.get("aborted")
