"""Command-line entry point: simulate, check-prob, lemma1, long-run.

Each subcommand reads an optional JSON config, applies flag overrides
(flags win), validates, runs, and writes ``results.csv`` and
``summary.json`` (plus ``trace.jsonl`` with ``--trace``) into ``--out``.
Validation failures exit with status 2.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .engine import JsonlTrace
from .experiments import (
    ConfigError,
    ParameterViolation,
    RunConfig,
    detection_probability,
    lemma1_trial,
    long_run,
    write_csv,
    write_summary,
)
from .quorums import QuorumError

EXIT_INVALID = 2
EXIT_IO = 1


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int)
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")


def _protocol_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, dest="n")
    p.add_argument("--m", type=int, dest="m")
    p.add_argument("--t", type=int, dest="t")
    p.add_argument("--quorum-size", type=int, dest="quorum_size")
    p.add_argument("--strategy")
    p.add_argument("--blame", choices=["frame", "truthful", "silent"])
    p.add_argument("--computes", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="selfheal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a number of COMPUTE calls and log each")
    _common(p)
    _protocol_flags(p)
    p.add_argument("--trace", action="store_true", help="also write trace.jsonl")

    p = sub.add_parser("check-prob", help="detection rate of a forced CHECK")
    _common(p)
    _protocol_flags(p)

    p = sub.add_parser("lemma1", help="tail of the largest rooted surviving subgraph")
    _common(p)
    p.add_argument("--n", type=int, dest="lemma_n")
    p.add_argument("--d", type=int, dest="lemma_d")
    p.add_argument("--p", type=float, dest="lemma_p")

    p = sub.add_parser("long-run", help="cumulative trajectory of a long run")
    _common(p)
    _protocol_flags(p)
    p.add_argument("--after-quarantine", type=int,
                   help="run until every bad party is marked, then this many more calls")
    p.add_argument("--trace", action="store_true", help="also write trace.jsonl")
    return parser


OVERRIDES = ("n", "m", "t", "quorum_size", "strategy", "blame", "computes", "trials",
             "lemma_n", "lemma_d", "lemma_p")


def resolve_config(args: argparse.Namespace) -> RunConfig:
    raw: dict = {}
    if args.config is not None:
        try:
            raw = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config", "top level must be an object")
    for name in OVERRIDES:
        value = getattr(args, name, None)
        if value is not None:
            raw[name] = value
    try:
        return RunConfig.from_dict(raw)
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from exc


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: IO_ERROR: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        args.out.mkdir(parents=True, exist_ok=True)
        rows, summary = _dispatch(args, cfg)
        write_csv(rows, args.out / "results.csv")
        summary = {"command": args.command, "seed": args.seed, "config": cfg.to_dict(),
                   "config_digest": cfg.digest(), **summary}
        write_summary(summary, args.out / "summary.json")
    except (ConfigError, QuorumError, ParameterViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: IO_ERROR: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


def _dispatch(args, cfg: RunConfig):
    if args.command == "lemma1":
        trials = cfg.trials
        res = lemma1_trial(cfg.lemma_n, cfg.lemma_d, cfg.lemma_p, trials, seed=args.seed)
        rows = [{"experiment": "lemma1", "seed": args.seed, "n": cfg.lemma_n, "d": cfg.lemma_d,
                 "p": cfg.lemma_p, "trial": k, "max_size": int(s), "hit": int(s >= res["k_star"])}
                for k, s in enumerate(res["sizes"])]
        summary = {k: v for k, v in res.items() if k != "sizes"}
        return rows, summary
    if args.command == "check-prob":
        res = detection_probability(cfg, seed=args.seed)
        return res.pop("rows"), res

    trace = JsonlTrace(args.out / "trace.jsonl") if getattr(args, "trace", False) else None
    try:
        if args.command == "simulate":
            res = long_run(cfg, seed=args.seed, trace=trace)
        else:
            res = long_run(cfg, seed=args.seed, after_quarantine=args.after_quarantine, trace=trace)
    finally:
        if trace is not None:
            trace.close()
    for r in res["rows"]:
        r["experiment"] = args.command
    return res["rows"], res["summary"]


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
