"""Command line: ``yfl {simulate,verify,classify,report}``.

Exit status: 0 success, 1 verification failure or insufficient history,
2 malformed configuration, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..errors import ConfigError, InsufficientHistory
from ..monitors import classify_singularity
from .config import load_config
from .persist import RecordsFormatError, read_records
from .plots import render_report
from .runner import RECORDS_FILE, read_stop_reason, simulate, verify, worker_count

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


def _records_path(arg) -> Path:
    p = Path(arg)
    return p / RECORDS_FILE if p.is_dir() else p


def cmd_simulate(args) -> int:
    if not args.config:
        raise ConfigError("simulate needs --config")
    cfg = load_config(args.config)
    summary = simulate(cfg, args.out, args.resume)
    print("\n".join(summary.lines()))
    print(f"records = {summary.out_dir / RECORDS_FILE}")
    return EXIT_OK


def cmd_verify(args) -> int:
    rep = verify(args.samples, args.seed, workers=worker_count())
    print("\n".join(rep.lines))
    print(f"verify: {rep.failures} failure(s)")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verify.txt").write_text("\n".join(rep.lines) + "\n")
    return EXIT_FAIL if rep.failures else EXIT_OK


def cmd_classify(args) -> int:
    path = _records_path(args.records or args.out or ".")
    records = read_records(path)
    reason = read_stop_reason(path, records)
    try:
        v = classify_singularity(records, reason)
    except InsufficientHistory as exc:
        print(f"InsufficientHistory: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print(f"stop_reason = {reason.value}")
    print(f"verdict = {v.kind.value}")
    for name in ("T_hat", "Omega", "A"):
        val = getattr(v, name)
        print(f"{name} = {'NA' if val != val else repr(val)}")
    return EXIT_OK


def cmd_report(args) -> int:
    path = _records_path(args.records or args.out or ".")
    records = read_records(path)
    out = Path(args.out) if args.out else path.parent
    for p in render_report(records, out):
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="yfl", description="Yamabe flow laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a flow with all monitors")
    p.add_argument("--config", required=False)
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--resume", help="checkpoint file to continue from")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="eigenvalue algebra and reference checks")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    for name, func, text in (("classify", cmd_classify, "classify a records file"),
                             ("report", cmd_report, "write SVG charts for a records file")):
        p = sub.add_parser(name, help=text)
        p.add_argument("records", nargs="?", help="records file or run directory")
        p.add_argument("--out")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, RecordsFormatError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
