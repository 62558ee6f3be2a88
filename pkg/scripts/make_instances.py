"""Write the shipped instance files under instances/."""

from __future__ import annotations

import argparse
from pathlib import Path

from bsmg.game import save_spec
from bsmg.instances import FULL_COUNTS, make_ids_instance, make_unit_instance, make_webapp_instance


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default=Path(__file__).resolve().parent.parent / "instances", type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--full", action="store_true", help="also write the full-scale web-app action counts")
    args = p.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)

    spec, ext = make_webapp_instance(seed=args.seed)
    save_spec(spec, args.out / "webapp_desk.json", ext)
    spec, ext = make_ids_instance()
    save_spec(spec, args.out / "ids.json", ext)
    save_spec(make_unit_instance(), args.out / "unit.json")
    if args.full:
        spec, ext = make_webapp_instance(FULL_COUNTS, seed=args.seed)
        save_spec(spec, args.out / "webapp_full.json", ext)
    print(f"wrote instances to {args.out}")


if __name__ == "__main__":
    main()
