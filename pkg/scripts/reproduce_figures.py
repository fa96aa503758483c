#!/usr/bin/env python3
"""Run every experiment preset and emit CSVs, summaries, and SVG charts.

Usage:
    python scripts/reproduce_figures.py [--out DIR] [--seeds N] [--jobs N]
                                        [--preset ID] [--no-svg]

At the published repetition counts the full set takes a while (the
congestion factorial alone is 108 ten-minute-horizon runs); start with
--seeds 1 for a smoke pass.
"""
import argparse
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from sdnsim.presets import DEFAULT_SEEDS, PRESET_IDS  # noqa: E402
from sdnsim.runner import run_preset  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/figures")
    parser.add_argument("--seeds", type=int, default=None,
                        help="seeds per case (default: preset repetition count)")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--preset", choices=PRESET_IDS, default=None,
                        help="run a single preset instead of all")
    parser.add_argument("--no-svg", action="store_true")
    args = parser.parse_args()

    seeds = list(DEFAULT_SEEDS[:args.seeds]) if args.seeds else None
    todo = [args.preset] if args.preset else PRESET_IDS
    for pid in todo:
        out_dir = os.path.join(args.out, pid)
        t0 = time.time()
        results = run_preset(pid, out_dir, seeds=seeds, jobs=args.jobs,
                             svg=not args.no_svg)
        print(f"{pid}: {len(results)} runs in {time.time() - t0:.1f}s -> {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
