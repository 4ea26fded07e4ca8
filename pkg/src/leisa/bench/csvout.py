"""CSV output for benchmark results: a data file and a sibling summary file.

Data rows:    target,n,repeat,t_ms
Summary rows: target,n,mean_ms,stddev_ms,throughput_per_s,cv_pct

Writes go through a temp file and an atomic rename so a crash mid-write
never leaves a half-written results file.  Runs with concurrency > 1 carry
an extra trailing `concurrency` column in the data file.
"""

from __future__ import annotations

import csv
import os
from pathlib import Path

from .runner import BenchResult

DATA_HEADER = ["target", "n", "repeat", "t_ms"]
SUMMARY_HEADER = ["target", "n", "mean_ms", "stddev_ms", "throughput_per_s", "cv_pct"]


def summary_path_for(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".summary" + (path.suffix or ".csv"))


def _atomic_write(path: Path, rows: list[list]) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerows(rows)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def emit_csv(results: list[BenchResult], path: str | Path) -> tuple[Path, Path]:
    """Write data and summary files; returns their paths."""
    if not results:
        raise ValueError("no results to write")
    path = Path(path)
    labeled = any(r.concurrency > 1 for r in results)

    data_rows: list[list] = [DATA_HEADER + (["concurrency"] if labeled else [])]
    for result in results:
        for row in result.rows:
            record = [result.target, row.n, row.repeat, f"{row.t_ms:.3f}"]
            if labeled:
                record.append(result.concurrency)
            data_rows.append(record)

    summary_rows: list[list] = [SUMMARY_HEADER]
    for result in results:
        for s in result.summaries:
            summary_rows.append([
                result.target, s.n, repr(s.mean_ms), repr(s.stddev_ms),
                repr(s.throughput_per_s), repr(s.cv_pct),
            ])

    _atomic_write(path, data_rows)
    summary_path = summary_path_for(path)
    _atomic_write(summary_path, summary_rows)
    return path, summary_path
