"""Command-line interface.

    sdnsim run --scenario FILE [--seed N] [--duration S] [--out DIR]
    sdnsim preset --id PRESET [--out DIR] [--svg] [--jobs N] [--seeds N]
    sdnsim list-presets

Every flag can also be set through an environment variable prefixed SDNSIM_
(SDNSIM_SCENARIO, SDNSIM_SEED, SDNSIM_DURATION, SDNSIM_OUT, SDNSIM_PRESET_ID,
SDNSIM_SVG, SDNSIM_JOBS, SDNSIM_SEEDS); explicit flags win.  Exit status is 0
on success and nonzero on validation or invariant failure.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .core import s_to_us
from .presets import DEFAULT_SEEDS, PRESET_IDS
from .runner import ConservationError, emit_run_csvs, emit_summary, run_preset, run_scenario
from .scenario import ScenarioError, load_scenario

ENV_PREFIX = "SDNSIM_"


def _env(name: str, default=None):
    return os.environ.get(ENV_PREFIX + name, default)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdnsim",
        description="Deterministic SDN data-plane fault tolerance simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario file")
    run_p.add_argument("--scenario", default=_env("SCENARIO"),
                       help="path to a scenario JSON file")
    run_p.add_argument("--seed", type=int,
                       default=None if _env("SEED") is None else int(_env("SEED")))
    run_p.add_argument("--duration", type=float,
                       default=None if _env("DURATION") is None else float(_env("DURATION")),
                       help="override run duration, seconds")
    run_p.add_argument("--out", default=_env("OUT", "out"))

    pre_p = sub.add_parser("preset", help="run a named experiment preset")
    pre_p.add_argument("--id", dest="preset_id", default=_env("PRESET_ID"),
                       choices=PRESET_IDS)
    pre_p.add_argument("--out", default=_env("OUT", "out"))
    pre_p.add_argument("--svg", action="store_true",
                       default=_env("SVG", "0") not in ("0", "", "false"))
    pre_p.add_argument("--jobs", type=int, default=int(_env("JOBS", "1")))
    pre_p.add_argument("--seeds", type=int,
                       default=None if _env("SEEDS") is None else int(_env("SEEDS")),
                       help="number of seeds per case (presets default to their "
                            "published repetition counts)")

    sub.add_parser("list-presets", help="print the available preset ids")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "list-presets":
            for pid in PRESET_IDS:
                print(pid)
            return 0
        if args.command == "run":
            if not args.scenario:
                parser.error("run requires --scenario (or SDNSIM_SCENARIO)")
            cfg = load_scenario(args.scenario)
            if args.seed is not None:
                cfg = replace(cfg, seed=args.seed)
            if args.duration is not None:
                cfg = replace(cfg, duration_us=s_to_us(args.duration))
            cfg.validate()
            result = run_scenario(cfg)
            written = emit_run_csvs(result, args.out)
            emit_summary([result], args.out, filename=f"{cfg.name}_summary.csv")
            for path in written:
                print(path)
            return 0
        if args.command == "preset":
            if not args.preset_id:
                parser.error("preset requires --id (or SDNSIM_PRESET_ID)")
            seeds = None
            if args.seeds is not None:
                seeds = list(DEFAULT_SEEDS[:args.seeds])
            results = run_preset(args.preset_id, args.out, seeds=seeds,
                                 jobs=args.jobs, svg=args.svg)
            print(f"{len(results)} runs -> {args.out}")
            return 0
    except (ScenarioError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ConservationError as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
