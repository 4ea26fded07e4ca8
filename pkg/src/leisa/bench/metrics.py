"""Timing statistics for benchmark runs.

For a step of n requests repeated several times, the per-repeat wall-clock
durations t_i (milliseconds) summarize to:

    mean          x = (1/r) * sum(t_i)
    stddev        s = sqrt(sum((t_i - x)^2) / (r - 1))     sample form
    throughput    n / (x / 1000)                            requests per second
    cv            100 * s / x                               percent

A single repeat reports stddev 0 and is flagged degenerate rather than
rejected, so smoke runs still emit full rows.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass

from ..errors import EmptySamples


@dataclass(frozen=True)
class TimingSample:
    n: int
    repeat: int
    t_ms: float


@dataclass(frozen=True)
class MetricsSummary:
    n: int
    repeats: int
    mean_ms: float
    stddev_ms: float
    throughput_per_s: float
    cv_pct: float
    degenerate: bool


def compute_metrics(samples: list[TimingSample]) -> MetricsSummary:
    if not samples:
        raise EmptySamples("no timing samples")
    n = samples[0].n
    times = [s.t_ms for s in samples]
    mean = statistics.fmean(times)
    stddev = statistics.stdev(times) if len(times) > 1 else 0.0
    return MetricsSummary(
        n=n,
        repeats=len(times),
        mean_ms=mean,
        stddev_ms=stddev,
        throughput_per_s=n / (mean / 1000.0),
        cv_pct=100.0 * stddev / mean,
        degenerate=len(times) == 1,
    )
