"""Subprocess harness for crash-durability trials.

The child process publishes (and optionally consumes and acks) against a
broker directory, confirming each durable operation on stdout the instant it
returns.  The parent kills it with SIGKILL, recovers the directory and checks
the at-least-once contract:

  * every confirmed-published, never-confirmed-acked message is recovered
  * no confirmed-acked message is ever redelivered
  * recovery order is the publish order
"""

from __future__ import annotations

import signal
import subprocess
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from leisa.broker import Broker, BrokerUser
from leisa.domain import ServiceRole

QUEUE = "chaos-q"
PRODUCER = "chaos-prod"
CONSUMER = "chaos-cons"

CHILD_SCRIPT = r"""
import sys
from leisa.broker import Broker

root, mode, count = sys.argv[1], sys.argv[2], int(sys.argv[3])
broker = Broker(root)
out = sys.stdout
i = 0
while i < count:
    i += 1
    mid = broker.publish("chaos-prod", "chaos-q", f"msg-{i}".encode())
    out.write(f"P {mid}\n")
    out.flush()
    if mode == "consume" and i % 5 == 0:
        for m in broker.consume("chaos-cons", "chaos-q", max_messages=2):
            broker.ack("chaos-cons", "chaos-q", m.message_id)
            out.write(f"A {m.message_id}\n")
            out.flush()
out.write("DONE\n")
out.flush()
import time
time.sleep(60)
"""


@dataclass
class TrialOutcome:
    confirmed_published: set[int]
    confirmed_acked: set[int]
    recovered_ids: list[int]
    finished: bool


def prepare_dir(root: Path) -> None:
    broker = Broker(root)
    broker.create_queue(QUEUE)
    broker.create_user(BrokerUser(PRODUCER, ServiceRole.PRODUCER), "pw")
    broker.create_user(
        BrokerUser(CONSUMER, ServiceRole.CONSUMER, readable_queue=QUEUE), "pw")
    broker.close()


def run_kill_trial(root: Path, mode: str = "publish", count: int = 100_000,
                   kill_after: float | None = 0.1,
                   wait_for_done: bool = False) -> TrialOutcome:
    prepare_dir(root)
    child = subprocess.Popen(
        [sys.executable, "-c", CHILD_SCRIPT, str(root), mode, str(count)],
        stdout=subprocess.PIPE,
    )
    finished = False
    if wait_for_done:
        # read until the child reports completion, then kill without cleanup
        lines = []
        for raw in child.stdout:
            line = raw.decode().strip()
            lines.append(line)
            if line == "DONE":
                finished = True
                break
        child.send_signal(signal.SIGKILL)
        child.wait()
        output = "\n".join(lines)
    else:
        time.sleep(kill_after)
        child.send_signal(signal.SIGKILL)
        stdout, _ = child.communicate()
        output = stdout.decode()
        finished = "DONE" in output

    confirmed_published, confirmed_acked = set(), set()
    for line in output.splitlines():
        if line.startswith("P "):
            confirmed_published.add(int(line[2:]))
        elif line.startswith("A "):
            confirmed_acked.add(int(line[2:]))

    broker = Broker(root)
    recovered = []
    while True:
        batch = broker.consume(CONSUMER, QUEUE, max_messages=500, wait=0.0)
        if not batch:
            break
        recovered.extend(m.message_id for m in batch)
    broker.close()
    return TrialOutcome(
        confirmed_published=confirmed_published,
        confirmed_acked=confirmed_acked,
        recovered_ids=recovered,
        finished=finished,
    )


def check_at_least_once(outcome: TrialOutcome) -> None:
    recovered = set(outcome.recovered_ids)
    must_survive = outcome.confirmed_published - outcome.confirmed_acked
    lost = must_survive - recovered
    assert not lost, f"confirmed messages lost in crash: {sorted(lost)[:10]}"
    redelivered_acked = recovered & outcome.confirmed_acked
    assert not redelivered_acked, f"acked messages redelivered: {sorted(redelivered_acked)[:10]}"
    assert outcome.recovered_ids == sorted(outcome.recovered_ids), "order broken"
