#!/usr/bin/env python3
"""Regenerate the checked-in golden preset expansions (seed 1 per case)."""
import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from sdnsim.presets import PRESET_IDS, preset  # noqa: E402

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "..", "tests", "golden")


def main() -> None:
    os.makedirs(GOLDEN_DIR, exist_ok=True)
    for pid in PRESET_IDS:
        tree = {name: cfg.to_dict() for name, cfg in preset(pid, seeds=[1])}
        path = os.path.join(GOLDEN_DIR, f"{pid}.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(tree, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {path} ({len(tree)} cases)")


if __name__ == "__main__":
    main()
