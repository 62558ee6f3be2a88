"""Value iteration on random 4-state, 2-type, 2x2 games: convergence and sup-norm contraction per seed."""

from __future__ import annotations

import argparse
import json

import numpy as np

from bsmg.game import generate_random_bsmg
from bsmg.oracle import value_iteration


def sweep(seeds, max_iter: int = 200, tol: float = 1e-6) -> list[dict]:
    rows = []
    for seed in seeds:
        spec = generate_random_bsmg(4, 2, 2, 2, seed=seed)
        res = value_iteration(spec, tol=tol, max_iter=max_iter)
        d = np.asarray(res.diffs)
        worst = float(np.max(d[1:] / np.maximum(d[:-1], 1e-300))) if d.size > 1 else 0.0
        rows.append({
            "seed": seed,
            "converged": res.converged,
            "iterations": res.iterations,
            "violations": int(np.sum(d[1:] > spec.discount * d[:-1] + 1e-9)),
            "worst_ratio": worst,
        })
    return rows


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, default=50)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--json", help="also write the rows to this file")
    args = p.parse_args(argv)
    rows = sweep(range(args.seeds), args.max_iter)
    for r in rows:
        flag = "" if r["converged"] and not r["violations"] else "  <--"
        print(f"seed {r['seed']:3d}  iters {r['iterations']:4d}  converged {r['converged']!s:5}  "
              f"violations {r['violations']:3d}  max d_k+1/d_k {r['worst_ratio']:.3f}{flag}")
    print(f"{sum(r['converged'] for r in rows)}/{len(rows)} converged, "
          f"{sum(r['violations'] > 0 for r in rows)} with contraction violations")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
