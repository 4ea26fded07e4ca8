from .metrics import MetricsSummary, TimingSample, compute_metrics
from .runner import DEFAULT_REPEATS, DEFAULT_STEPS, TARGETS, BenchPlan, BenchResult, run_bench
from .csvout import DATA_HEADER, SUMMARY_HEADER, emit_csv, summary_path_for

__all__ = [
    "MetricsSummary", "TimingSample", "compute_metrics",
    "DEFAULT_REPEATS", "DEFAULT_STEPS", "TARGETS", "BenchPlan", "BenchResult", "run_bench",
    "DATA_HEADER", "SUMMARY_HEADER", "emit_csv", "summary_path_for",
]
