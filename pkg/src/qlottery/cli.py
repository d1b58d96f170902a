"""Command-line front end.

    qlottery run <config> [--seed S] [--out F] [--width W]
    qlottery verify <transcript>
    qlottery stats <config> --trials N [--json] [--seed S] [--width W]

Exit codes: 0 success, 1 configuration or parse error, 2 aborted run,
3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, RunConfig, load_config
from .protocol import LotteryAborted, detection_stats, run_lottery
from .transcript import ProtocolTranscript, TranscriptFormatError, verify_transcript_dict

SEED_ENV = "QLOTTERY_SEED"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ABORTED = 2
EXIT_VIOLATION = 3


def _load(path: str, seed: Optional[int], width: Optional[int]) -> RunConfig:
    cfg = load_config(path)
    if seed is None and os.environ.get(SEED_ENV):
        try:
            seed = int(os.environ[SEED_ENV], 0)
        except ValueError as exc:
            raise ConfigError(SEED_ENV, f"cannot parse {os.environ[SEED_ENV]!r}") from exc
    if seed is not None:
        cfg = replace(cfg, master_seed=seed)
    if width is not None:
        cfg = cfg.with_width(width)
    return cfg.validate()


def _print_summary(t: ProtocolTranscript, out) -> None:
    if t.non_secure:
        print("mode: NON-SECURE (reduced widths)", file=out)
    for v in t.verdicts:
        if v["kind"] == "exclusion":
            print(f"excluded {v['subject'][:16]}: {v['reason']}", file=out)
    if t.aborted:
        print(f"ABORTED: {t.abort_reason}", file=out)
        return
    print(f"winner: {t.winner.hex()}", file=out)
    print(f"{'pid':<18}{'distance':>9}  share", file=out)
    for e in t.rewards.entries:
        print(f"{e.participant[:16]:<18}{e.distance:>9}  {e.share} ({float(e.share):.6f})", file=out)
    for v in t.verdicts:
        if v["kind"] == "outcome":
            status = "OK" if v["ok"] else f"VIOLATION: {v['reason']}" + (f" ({v['culprit']})" if v["culprit"] else "")
            print(f"verdict: {status}", file=out)


def cmd_run(args, out=None, err=None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    try:
        cfg = _load(args.config, args.seed, args.width)
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=err)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=err)
        return EXIT_CONFIG

    code = EXIT_OK
    try:
        transcript = run_lottery(cfg)
    except LotteryAborted as exc:
        transcript = exc.transcript
        code = EXIT_ABORTED
    if args.out:
        Path(args.out).write_text(transcript.to_json(), encoding="utf-8")
    _print_summary(transcript, out)
    return code


def cmd_verify(args, out=None, err=None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    try:
        data = json.loads(Path(args.transcript).read_text(encoding="utf-8"))
        verdict = verify_transcript_dict(data)
    except FileNotFoundError:
        print(f"error: transcript not found: {args.transcript}", file=err)
        return EXIT_CONFIG
    except (json.JSONDecodeError, TranscriptFormatError) as exc:
        print(f"error: cannot parse transcript: {exc}", file=err)
        return EXIT_CONFIG
    if verdict.ok:
        print("OK", file=out)
        return EXIT_OK
    culprit = f": {verdict.culprit}" if verdict.culprit else ""
    print(f"VIOLATION {verdict.reason}{culprit}", file=out)
    return EXIT_VIOLATION


def cmd_stats(args, out=None, err=None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    if args.trials < 1:
        print("error: --trials must be >= 1", file=err)
        return EXIT_CONFIG
    try:
        cfg = _load(args.config, args.seed, args.width)
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=err)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=err)
        return EXIT_CONFIG
    summary = detection_stats(cfg, args.trials)
    data = summary.to_dict()
    if not args.json:
        lo, hi = summary.interval
        rate = "n/a" if summary.mean_error_rate is None else f"{summary.mean_error_rate:.4f}"
        print(f"scheme               {summary.scheme}", file=out)
        print(f"attack               {summary.attack}", file=out)
        print(f"trials               {summary.trials}", file=out)
        print(f"detections           {summary.detections}", file=out)
        print(f"detection prob       {summary.probability:.4f}  (Wilson 95%: {lo:.4f} .. {hi:.4f})", file=out)
        print(f"mean error rate      {rate}  over {summary.error_rates} sessions", file=out)
        print(f"aborted runs         {summary.aborted_runs}", file=out)
    print(json.dumps(data, sort_keys=True), file=out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qlottery", description="Quantum lottery protocol simulator and verifier")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one lottery and write its transcript")
    run.add_argument("config")
    run.add_argument("--seed", type=lambda s: int(s, 0))
    run.add_argument("--out")
    run.add_argument("--width", type=int, help="reduced TID/PID width for diagnostics (NON-SECURE)")
    run.set_defaults(func=cmd_run)

    verify = sub.add_parser("verify", help="verify a transcript from its public events")
    verify.add_argument("transcript")
    verify.set_defaults(func=cmd_verify)

    stats = sub.add_parser("stats", help="detection statistics over repeated runs")
    stats.add_argument("config")
    stats.add_argument("--trials", type=int, required=True)
    stats.add_argument("--json", action="store_true", help="print only the JSON summary")
    stats.add_argument("--seed", type=lambda s: int(s, 0))
    stats.add_argument("--width", type=int)
    stats.set_defaults(func=cmd_stats)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
