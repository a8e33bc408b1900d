"""Command-line entry point: ``uavhighway {run,sweep,validate,replay}``.

Exit codes: 0 success, 1 invalid config or arguments, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import SWEEPABLE, ConfigError, load_config, packaged_scenario, with_overrides
from .experiment import (
    ExperimentAborted,
    SUMMARY_METRICS,
    build_transport,
    emit_reports,
    load_episode_log,
    needs_llm,
    replay_episode,
    run_experiment,
    summarize,
    sweep,
)

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("uavhighway")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None,
                   help="scenario JSON (default: packaged paper_default)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--episodes", type=int, default=None, help="override the episode count")
    p.add_argument("--mock-llm", type=Path, default=None, metavar="TRANSCRIPT",
                   help="JSONL transcript of scripted LLM replies")
    p.add_argument("--live-llm", action="store_true", help="query the configured HTTP endpoint")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uavhighway", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a seeded episode batch and write reports")
    _add_common(p)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--no-logs", action="store_true", help="skip episodes.jsonl")

    p = sub.add_parser("sweep", help="run one batch per parameter value")
    _add_common(p)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--parameter", required=True, choices=SWEEPABLE)
    p.add_argument("--values", required=True, nargs="+")

    p = sub.add_parser("validate", help="load and check a config, print the resolved values")
    p.add_argument("--config", type=Path, default=None)

    p = sub.add_parser("replay", help="re-run logged episodes with their recorded actions")
    _add_common(p)
    p.add_argument("--log", type=Path, required=True, help="episodes.jsonl written by run")
    p.add_argument("--episode", type=int, default=None, help="only this episode")
    return parser


def _load(args):
    path = args.config if args.config is not None else packaged_scenario("paper_default")
    cfg = load_config(path)
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "episodes", None) is not None:
        changes["episodes"] = args.episodes
    if getattr(args, "mock_llm", None) is not None:
        if not args.mock_llm.exists():
            raise ConfigError(f"mock LLM transcript {str(args.mock_llm)!r} does not exist")
        changes["mock_llm_transcript"] = str(args.mock_llm)
    if getattr(args, "live_llm", False):
        changes["live_llm"] = True
    return with_overrides(cfg, **changes) if changes else cfg


def _coerce(parameter: str, raw: str):
    if parameter in ("num_uavs", "num_terrestrial_bs"):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{parameter} values must be integers, got {raw!r}") from None
    return raw


def _print_summary(summary: dict, out=None) -> None:
    out = out or sys.stdout
    print(f"episodes summarised: {summary['episodes']}", file=out)
    for name in SUMMARY_METRICS:
        print(f"  {name:<18} {summary[name + '_mean']:>12.4f} +/- {summary[name + '_std']:.4f}", file=out)


def cmd_run(args) -> int:
    cfg = _load(args)
    transport = build_transport(cfg) if needs_llm(cfg) else None
    try:
        result = run_experiment(cfg, transport=transport, keep_logs=not args.no_logs)
    except ExperimentAborted as exc:
        emit_reports(exc.rows, args.out, logs=None if args.no_logs else exc.logs)
        print(f"error: {exc}; {len(exc.rows)} finished episodes written to {args.out}", file=sys.stderr)
        return EXIT_RUNTIME
    summary = summarize(result.rows)
    summary["llm_fallbacks"] = result.llm_fallbacks
    emit_reports(result.rows, args.out, summary=summary, logs=None if args.no_logs else result.logs)
    _print_summary(summary)
    print(f"reports written to {args.out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    values = [_coerce(args.parameter, v) for v in args.values]
    transport = build_transport(cfg) if needs_llm(cfg) or "llm" in values else None
    rows = sweep(cfg, args.parameter, values, transport=transport)
    args.out.mkdir(parents=True, exist_ok=True)
    emit_reports([], args.out, summary={"episodes": 0}, sweep_rows=rows)
    for r in rows:
        print(f"{args.parameter}={r['value']}: total_reward {r['total_reward_mean']:.4f} "
              f"+/- {r['total_reward_std']:.4f} over {r['episodes']} episodes")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load(args)
    print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True, default=str))
    print("config OK", file=sys.stderr)
    return EXIT_OK


def cmd_replay(args) -> int:
    cfg = _load(args)
    episodes = load_episode_log(args.log)
    chosen = sorted(episodes) if args.episode is None else [args.episode]
    bad = 0
    for ep in chosen:
        if ep not in episodes:
            print(f"error: episode {ep} not in {args.log}", file=sys.stderr)
            return EXIT_INVALID
        _, mismatches = replay_episode(cfg, episodes[ep])
        status = "ok" if not mismatches else f"{len(mismatches)} mismatches, first {mismatches[0]}"
        print(f"episode {ep}: {status}")
        bad += bool(mismatches)
    return EXIT_OK if bad == 0 else EXIT_RUNTIME


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "validate": cmd_validate, "replay": cmd_replay}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - surfaced as exit code 2
        log.debug("runtime failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
