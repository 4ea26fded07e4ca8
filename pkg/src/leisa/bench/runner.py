"""Benchmark driver: replays the load-sweep protocol against a live gateway.

Five targets, each swept over a grid of step sizes with a fixed repeat count
(defaults: messages 1,000 to 10,000 by 1,000; registrations and mappings 100
to 1,000 by 100; 10 repeats):

    validator     n validation requests per step
    registration  n service registrations per step (cleaned up untimed)
    mapping       one producer mapped to n consumers, one request per consumer
    publish       n publishes routed to one mapped consumer
    consume       drain n pre-loaded messages (pre-load untimed)

Fixture setup and teardown are excluded from the timed window; each repeat is
timed end-to-end as a single duration on the monotonic clock.
"""

from __future__ import annotations

import logging
import time
import threading
import uuid
from dataclasses import dataclass, field

from ..errors import FixtureSetupFailed, LeisaError, TargetUnreachable
from ..httpclient import HttpJsonClient
from .metrics import MetricsSummary, TimingSample, compute_metrics

log = logging.getLogger(__name__)

TARGETS = ("validator", "registration", "mapping", "publish", "consume")

DEFAULT_STEPS: dict[str, list[int]] = {
    "validator": list(range(1000, 10001, 1000)),
    "registration": list(range(100, 1001, 100)),
    "mapping": list(range(100, 1001, 100)),
    "publish": list(range(1000, 10001, 1000)),
    "consume": list(range(1000, 10001, 1000)),
}

DEFAULT_REPEATS = 10

_PASSWORD = "bench-password-1"

_WEIGHT_BODY = {
    "eventType": "weightEvent",
    "payload": {
        "animalId": "AU0001",
        "eventDateTime": "2024-01-05T06:00:00Z",
        "weightKg": 412.5,
    },
}


class StepFailed(LeisaError):
    code = "StepFailed"


@dataclass
class BenchPlan:
    target: str
    base_url: str
    steps: list[int] = field(default_factory=list)
    repeats: int = DEFAULT_REPEATS
    concurrency: int = 1

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ValueError(f"unknown target {self.target!r}")
        if not self.steps:
            self.steps = list(DEFAULT_STEPS[self.target])


@dataclass
class BenchResult:
    target: str
    concurrency: int
    rows: list[TimingSample]
    summaries: list[MetricsSummary]


def _expect(status: int, doc, wanted: int, what: str):
    if status != wanted:
        raise StepFailed(f"{what}: expected HTTP {wanted}, got {status}: {doc}")
    return doc


class _Driver:
    """One benchmark target.  `iteration` issues a single request; stateful
    targets override run_step instead."""

    supports_workers = True

    def __init__(self, plan: BenchPlan):
        self.plan = plan
        self.client = HttpJsonClient(plan.base_url)

    def prepare(self) -> None:
        pass

    def setup_step(self, n: int) -> None:
        pass

    def iteration(self, client: HttpJsonClient, i: int) -> None:
        raise NotImplementedError

    def run_step(self, n: int) -> None:
        self._run_iterations(n)

    def _run_iterations(self, n: int) -> None:
        k = self.plan.concurrency
        if k <= 1 or not self.supports_workers:
            for i in range(n):
                self.iteration(self.client, i)
            return
        errors: list[Exception] = []

        def work(worker: int, count: int, offset: int):
            client = HttpJsonClient(self.plan.base_url)
            try:
                for j in range(count):
                    self.iteration(client, offset + j)
            except Exception as exc:
                errors.append(exc)
            finally:
                client.close()

        counts = [n // k + (1 if w < n % k else 0) for w in range(k)]
        offsets = [sum(counts[:w]) for w in range(k)]
        threads = [
            threading.Thread(target=work, args=(w, counts[w], offsets[w]))
            for w in range(k) if counts[w]
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if errors:
            raise errors[0]

    def cleanup_step(self, n: int) -> None:
        pass

    def cleanup(self) -> None:
        self.client.close()

    # -- shared fixture helpers ------------------------------------------

    def _register(self, role: str, prefix: str) -> dict:
        username = f"{prefix}-{uuid.uuid4().hex[:10]}"
        status, doc = self.client.request(
            "POST", "/services",
            body={"username": username, "password": _PASSWORD, "role": role},
        )
        if status != 201:
            raise FixtureSetupFailed(f"registering {role}: HTTP {status}: {doc}")
        doc["password"] = _PASSWORD
        return doc

    def _delete_service(self, record: dict) -> None:
        self.client.request(
            "DELETE", f"/services/{record['serviceId']}",
            auth=(record["username"], record["password"]),
        )

    def _drain(self, consumer: dict, at_least: int = 0, batch: int = 500) -> int:
        """Fetch-and-ack a consumer's queue until it is empty, waiting for
        messages only while fewer than `at_least` have arrived."""
        auth = (consumer["username"], consumer["password"])
        drained = 0
        while True:
            wait = 5 if drained < at_least else 0
            status, doc = self.client.request(
                "GET", f"/consume?max={batch}&wait={wait}", auth=auth)
            _expect(status, doc, 200, "consume")
            messages = doc["messages"]
            if not messages:
                if drained < at_least:
                    raise StepFailed(f"queue dried up after {drained}/{at_least} messages")
                return drained
            ids = [m["messageId"] for m in messages]
            status, doc = self.client.request(
                "POST", "/consume/ack", body={"messageIds": ids}, auth=auth)
            _expect(status, doc, 200, "ack")
            drained += len(ids)


class _ValidatorDriver(_Driver):
    def iteration(self, client: HttpJsonClient, i: int) -> None:
        status, doc = client.request("POST", "/validate", body=_WEIGHT_BODY)
        _expect(status, doc, 200, "validate")


class _RegistrationDriver(_Driver):
    def __init__(self, plan: BenchPlan):
        super().__init__(plan)
        self._created: list[dict] = []
        self._created_lock = threading.Lock()

    def iteration(self, client: HttpJsonClient, i: int) -> None:
        role = "producer" if i % 2 == 0 else "consumer"
        username = f"bench-reg-{uuid.uuid4().hex[:12]}"
        status, doc = client.request(
            "POST", "/services",
            body={"username": username, "password": _PASSWORD, "role": role},
        )
        _expect(status, doc, 201, "register")
        doc["password"] = _PASSWORD
        with self._created_lock:
            self._created.append(doc)

    def cleanup_step(self, n: int) -> None:
        for record in self._created:
            self._delete_service(record)
        self._created.clear()


class _MappingDriver(_Driver):
    def __init__(self, plan: BenchPlan):
        super().__init__(plan)
        self.event_type = "weightEvent"
        self.producer: dict = {}
        self.consumers: list[dict] = []

    def prepare(self) -> None:
        self.producer = self._register("producer", "bench-map-p")
        for _ in range(max(self.plan.steps)):
            self.consumers.append(self._register("consumer", "bench-map-c"))

    def setup_step(self, n: int) -> None:
        # mappings from the previous repeat would turn inserts into no-ops
        self.client.request(
            "DELETE", f"/mappings?eventType={self.event_type}",
            auth=(self.producer["username"], self.producer["password"]),
        )

    def iteration(self, client: HttpJsonClient, i: int) -> None:
        status, doc = client.request(
            "POST", "/mappings",
            body={"eventType": self.event_type,
                  "consumerIds": [self.consumers[i]["serviceId"]]},
            auth=(self.producer["username"], self.producer["password"]),
        )
        _expect(status, doc, 200, "set mapping")

    def cleanup(self) -> None:
        for record in [self.producer, *self.consumers]:
            if record:
                self._delete_service(record)
        super().cleanup()


class _PublishDriver(_Driver):
    def __init__(self, plan: BenchPlan):
        super().__init__(plan)
        self.producer: dict = {}
        self.consumer: dict = {}

    def prepare(self) -> None:
        self.producer = self._register("producer", "bench-pub-p")
        self.consumer = self._register("consumer", "bench-pub-c")
        status, doc = self.client.request(
            "POST", "/mappings",
            body={"eventType": "weightEvent",
                  "consumerIds": [self.consumer["serviceId"]]},
            auth=(self.producer["username"], self.producer["password"]),
        )
        if status != 200:
            raise FixtureSetupFailed(f"mapping fixture: HTTP {status}: {doc}")
        self._auth = (self.producer["username"], self.producer["password"])

    def iteration(self, client: HttpJsonClient, i: int) -> None:
        status, doc = client.request(
            "POST", "/publish/weightEvent", body=_WEIGHT_BODY, auth=self._auth)
        _expect(status, doc, 200, "publish")

    def cleanup_step(self, n: int) -> None:
        self._drain(self.consumer, at_least=n)

    def cleanup(self) -> None:
        for record in (self.producer, self.consumer):
            if record:
                self._delete_service(record)
        super().cleanup()


class _ConsumeDriver(_PublishDriver):
    supports_workers = False

    def setup_step(self, n: int) -> None:
        for i in range(n):
            self.iteration(self.client, i)

    def run_step(self, n: int) -> None:
        self._drain(self.consumer, at_least=n)

    def cleanup_step(self, n: int) -> None:
        pass


_DRIVERS = {
    "validator": _ValidatorDriver,
    "registration": _RegistrationDriver,
    "mapping": _MappingDriver,
    "publish": _PublishDriver,
    "consume": _ConsumeDriver,
}


def check_reachable(base_url: str) -> None:
    client = HttpJsonClient(base_url, timeout=5.0)
    try:
        client.request("GET", "/")  # any HTTP response proves liveness
    finally:
        client.close()


def run_bench(plan: BenchPlan) -> BenchResult:
    check_reachable(plan.base_url)
    driver = _DRIVERS[plan.target](plan)
    rows: list[TimingSample] = []
    summaries: list[MetricsSummary] = []
    try:
        driver.prepare()
        for n in plan.steps:
            step_samples: list[TimingSample] = []
            for repeat in range(1, plan.repeats + 1):
                driver.setup_step(n)
                t0 = time.perf_counter_ns()
                driver.run_step(n)
                t_ms = (time.perf_counter_ns() - t0) / 1e6
                driver.cleanup_step(n)
                sample = TimingSample(n=n, repeat=repeat, t_ms=t_ms)
                step_samples.append(sample)
                rows.append(sample)
                log.info("%s n=%d repeat=%d: %.1f ms", plan.target, n, repeat, t_ms)
            summaries.append(compute_metrics(step_samples))
    finally:
        try:
            driver.cleanup()
        except (LeisaError, OSError):
            log.warning("bench cleanup incomplete", exc_info=True)
    return BenchResult(
        target=plan.target, concurrency=plan.concurrency,
        rows=rows, summaries=summaries,
    )
