"""Command-line surface: validate-gdr, compress-gdr, build-index, run, report."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .attribution import report_from_dict
from .gdr import MalformedDocument, SchemaViolation, compress_gdr, parse_gdr, serialize_context, validate_gdr
from .harness import (
    ConfigError,
    load_run_config,
    render_structured,
    render_tabular,
    run_evaluation,
)
from .index import load_corpus


def _cmd_validate_gdr(args: argparse.Namespace) -> int:
    try:
        raw = Path(args.path).read_text("utf-8")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        doc = parse_gdr(raw, check=False)
    except (MalformedDocument, SchemaViolation) as exc:
        print(f"error: {args.path}: {exc}", file=sys.stderr)
        return 2
    violations = validate_gdr(doc)
    if not violations:
        print(f"OK: {args.path} is valid")
        return 0
    print(f"{len(violations)} violation(s) in {args.path}:")
    for v in violations:
        print(f"- {v.path}: {v.message}")
    return 1


def _cmd_compress_gdr(args: argparse.Namespace) -> int:
    try:
        doc = parse_gdr(Path(args.path).read_text("utf-8"))
    except (OSError, MalformedDocument, SchemaViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(serialize_context(compress_gdr(doc)))
    return 0


def _cmd_build_index(args: argparse.Namespace) -> int:
    try:
        index = load_corpus(args.corpus)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"assets: {index.doc_count}")
    print(f"vocabulary: {len(index.postings)}")
    print(f"mean document length: {index.mean_doc_length:.3f}")
    for content_type, ids in index.partitions.items():
        print(f"partition {content_type}: {len(ids)}")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        config = load_run_config(args.config)
        report, _, _ = run_evaluation(config, out_dir=args.out)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(render_tabular(report))
    print(f"artifacts written to {args.out}", file=sys.stderr)
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    report_path = Path(args.run_dir) / "report.json"
    try:
        report = report_from_dict(json.loads(report_path.read_text("utf-8")))
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: cannot load {report_path}: {exc}", file=sys.stderr)
        return 2
    if args.format == "tabular":
        sys.stdout.write(render_tabular(report))
    else:
        sys.stdout.write(render_structured(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="designsearch",
        description="Canvas-grounded asset search pipeline and evaluation harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-gdr", help="check a GDR document against the schema")
    p.add_argument("path")
    p.set_defaults(func=_cmd_validate_gdr)

    p = sub.add_parser("compress-gdr", help="print the compressed context for a GDR document")
    p.add_argument("path")
    p.set_defaults(func=_cmd_compress_gdr)

    p = sub.add_parser("build-index", help="ingest a corpus file and print index stats")
    p.add_argument("corpus")
    p.set_defaults(func=_cmd_build_index)

    p = sub.add_parser("run", help="run the full evaluation described by a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="run_output", help="directory for run artifacts")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("report", help="re-emit a previous run's report")
    p.add_argument("run_dir")
    p.add_argument("--format", choices=("structured", "tabular"), default="tabular")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
