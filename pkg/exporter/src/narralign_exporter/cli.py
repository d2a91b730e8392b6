"""CLI: export paragraph JSONL to a binary embedding matrix, or verify one."""

from __future__ import annotations

import argparse
import json
import sys

from .export import DEFAULT_MODEL, ExporterError, ExportJob, export, verify


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="narralign-export",
        description="Embed paragraphs and emit the narralign binary matrix format.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="paragraph JSONL -> .f32 matrix")
    p.add_argument("--input", required=True, help="paragraph JSONL file")
    p.add_argument("--output", required=True, help="matrix file to write")
    p.add_argument(
        "--model", default=DEFAULT_MODEL,
        help="sentence-transformers id, or 'hash'/'hash:<dim>' for the "
        "offline deterministic encoder",
    )
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument(
        "--no-normalize", dest="normalize", action="store_false",
        help="skip L2 normalization of rows",
    )

    p = sub.add_parser("verify", help="check a matrix file against its JSONL")
    p.add_argument("--matrix", required=True)
    p.add_argument("--input", required=True)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "export":
            job = ExportJob(
                input_path=args.input,
                output_path=args.output,
                model=args.model,
                batch_size=args.batch_size,
                normalize=args.normalize,
            )
            report = export(job)
        else:
            report = verify(args.matrix, args.input)
        print(json.dumps(report, sort_keys=True))
        return 0 if report["ok"] else 1
    except ExporterError as exc:
        sys.stderr.write(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n"
        )
        return 2


if __name__ == "__main__":
    sys.exit(main())
