"""leisa-bench: load-sweep benchmark against a running gateway.

Examples:

    leisa-bench --target validator --base-url http://127.0.0.1:8450 --out results.csv
    leisa-bench --target publish --steps 500..2000:500 --repeats 3 --out pub.csv
"""

from __future__ import annotations

import argparse
import logging
import sys

from ..errors import LeisaError
from .csvout import emit_csv
from .runner import DEFAULT_REPEATS, TARGETS, BenchPlan, run_bench


def parse_steps(spec: str) -> list[int]:
    """Parse 'a..b:c' into the inclusive range a, a+c, ..., b."""
    try:
        span, _, stride = spec.partition(":")
        start_s, _, stop_s = span.partition("..")
        start, stop = int(start_s), int(stop_s)
        step = int(stride) if stride else 1
        if start <= 0 or stop < start or step <= 0:
            raise ValueError
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"bad steps {spec!r}; expected a..b:c with 0 < a <= b and c > 0")
    return list(range(start, stop + 1, step))


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="leisa-bench",
        description="Benchmark a gateway's validator, registration, mapping, publish and consume operations.",
    )
    parser.add_argument("--target", required=True, choices=list(TARGETS) + ["all"])
    parser.add_argument("--steps", type=parse_steps, default=None,
                        help="load grid a..b:c (default: the target's standard sweep)")
    parser.add_argument("--repeats", type=int, default=DEFAULT_REPEATS)
    parser.add_argument("--base-url", default="http://127.0.0.1:8450")
    parser.add_argument("--out", default="results.csv")
    parser.add_argument("--concurrency", type=int, default=1,
                        help="parallel request workers within a step (consume drains sequentially)")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(message)s",
    )

    targets = list(TARGETS) if args.target == "all" else [args.target]
    results = []
    try:
        for target in targets:
            plan = BenchPlan(
                target=target,
                base_url=args.base_url,
                steps=list(args.steps) if args.steps else [],
                repeats=args.repeats,
                concurrency=args.concurrency,
            )
            results.append(run_bench(plan))
    except LeisaError as exc:
        print(f"error: {exc.code}: {exc.detail}", file=sys.stderr)
        return 1

    data_path, summary_path = emit_csv(results, args.out)
    print(f"wrote {data_path} and {summary_path}")
    for result in results:
        for s in result.summaries:
            print(f"{result.target} n={s.n}: mean {s.mean_ms:.1f} ms, "
                  f"stddev {s.stddev_ms:.1f} ms, {s.throughput_per_s:.1f} req/s, "
                  f"CV {s.cv_pct:.2f}%")
    return 0


if __name__ == "__main__":
    sys.exit(main())
