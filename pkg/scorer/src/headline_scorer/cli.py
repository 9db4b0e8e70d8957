"""CLI for the headline scoring ETL.

    headline-scorer score --in raw.csv --out scored.csv --model builtin:finlex-v1 --batch 64

Exit codes: 0 success, 1 usage, 2 input error, 3 model/runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional

from .models import DEFAULT_MODEL, ModelLoadError, load_model
from .score import InputError, score_file


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="headline-scorer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    score = sub.add_parser("score", help="score a raw headline CSV")
    score.add_argument("--in", dest="input", required=True, help="raw headline CSV (date,text[,source])")
    score.add_argument("--out", dest="output", required=True, help="scored CSV to write")
    score.add_argument(
        "--model",
        default=DEFAULT_MODEL,
        help=f"model spec: builtin:<rev> or hf:<id-or-path> (default {DEFAULT_MODEL})",
    )
    score.add_argument("--revision", default=None, help="pinned revision for hf models")
    score.add_argument("--batch", type=int, default=64, help="inference batch size")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.batch < 1:
            raise UsageError("--batch must be >= 1")
        model = load_model(args.model, batch_size=args.batch, revision=args.revision)
        count = score_file(args.input, args.output, model, batch_size=args.batch)
        print(f"scored {count} headlines with {args.model} -> {args.output}")
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except ModelLoadError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
