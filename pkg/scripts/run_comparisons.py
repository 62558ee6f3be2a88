"""Run the shipped comparison configs and write CSV, summary and plots under results/."""

from __future__ import annotations

import argparse
from pathlib import Path

from bsmg.cli import main as bsmg_main

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = {"webapp": ROOT / "configs" / "webapp_compare.json", "ids": ROOT / "configs" / "ids_compare.json"}


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("which", nargs="*", choices=sorted(CONFIGS), default=sorted(CONFIGS))
    p.add_argument("--out", type=Path, default=ROOT / "results")
    p.add_argument("--jobs", type=int, default=1)
    args = p.parse_args(argv)
    for name in args.which:
        print(f"== {name}")
        code = bsmg_main(["compare", str(CONFIGS[name]), "--out", str(args.out / name), "--jobs", str(args.jobs)])
        if code:
            return code
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
