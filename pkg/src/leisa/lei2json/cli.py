"""lei2json: convert tabular livestock CSV records to event envelopes.

    lei2json convert --in data.csv --event weightEvent --out events.jsonl
    lei2json publish --in data.csv --event weightEvent \
        --user farm-a --pass secret123 --base-url http://127.0.0.1:8450
"""

from __future__ import annotations

import argparse
import json
import sys

from ..domain import serialize_envelope
from ..errors import LeisaError
from ..schemas import load_schemas
from .convert import convert, convert_and_publish
from .mapping import load_mapping


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="lei2json", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_convert = sub.add_parser("convert", help="convert a CSV file to JSONL envelopes")
    p_convert.add_argument("--in", dest="input", required=True, help="input CSV path")
    p_convert.add_argument("--event", required=True, help="event type, e.g. weightEvent")
    p_convert.add_argument("--mapping", help="column mapping JSON file")
    p_convert.add_argument("--out", required=True, help="output JSONL path")
    p_convert.add_argument("--schemas", help="directory of extra schema files")

    p_publish = sub.add_parser("publish", help="convert, validate and publish via a gateway")
    p_publish.add_argument("--in", dest="input", required=True)
    p_publish.add_argument("--event", required=True)
    p_publish.add_argument("--mapping")
    p_publish.add_argument("--user", required=True)
    p_publish.add_argument("--pass", dest="password", required=True)
    p_publish.add_argument("--base-url", required=True)
    p_publish.add_argument("--schemas")

    args = parser.parse_args(argv)
    try:
        registry = load_schemas(args.schemas)
        mapping = load_mapping(args.mapping) if args.mapping else None

        if args.command == "convert":
            envelopes, errors = convert(args.input, args.event, mapping, registry)
            with open(args.out, "w", encoding="utf-8") as f:
                for env in envelopes:
                    f.write(serialize_envelope(env).decode("utf-8") + "\n")
            for err in errors:
                print(f"row {err.row}: {err.message}", file=sys.stderr)
            print(f"converted {len(envelopes)} rows, {len(errors)} errors -> {args.out}")
            return 0

        summary = convert_and_publish(
            args.input, args.event, args.user, args.password, args.base_url,
            mapping, registry,
        )
        for err in summary.row_errors:
            print(f"row {err.row}: {err.message}", file=sys.stderr)
        print(json.dumps(summary.as_dict(), indent=2))
        return 1 if summary.aborted else 0
    except LeisaError as exc:
        print(f"error: {exc.code}: {exc.detail}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
