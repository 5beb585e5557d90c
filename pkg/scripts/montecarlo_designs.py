"""Finite-sample Monte Carlo over the nine (N, T) designs of the resource model.

Writes one row per design with the mean and standard deviation of RMSE and R^2
for the two non-benchmark actions.

    python3 scripts/montecarlo_designs.py --reps 20 --out results/montecarlo_designs.csv
"""

import argparse
import csv
import time
from pathlib import Path

from mta.montecarlo import McDesign, run_montecarlo, summarize

DESIGNS = [(100, 100), (100, 500), (100, 1000), (200, 100), (200, 200),
           (500, 100), (500, 500), (1000, 100), (1000, 1000)]
METRICS = ["rmse_y0", "rmse_y1", "r2_y0", "r2_y1"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--S-true", type=int, default=5000)
    ap.add_argument("--S-est", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=2015)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--designs", default="all", help="comma list like 100x100,1000x1000")
    ap.add_argument("--out", default="results/montecarlo_designs.csv")
    args = ap.parse_args()

    designs = DESIGNS if args.designs == "all" else \
        [tuple(int(v) for v in d.split("x")) for d in args.designs.split(",")]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "T", "succeeded"] + [f"{m}_{s}" for m in METRICS for s in ("mean", "std")])
        for N, T in designs:
            t0 = time.time()
            design = McDesign(N=N, T=T, replications=args.reps, S_true=args.S_true,
                              S_est=args.S_est, seed=args.seed)
            _, _, reps = run_montecarlo(design, jobs=args.jobs)
            s = summarize(reps)
            w.writerow([N, T, s["succeeded"]] + [f"{s.get(f'{m}_{k}', float('nan')):.4f}"
                                                 for m in METRICS for k in ("mean", "std")])
            fh.flush()
            print(f"N={N:5d} T={T:5d}  " + "  ".join(
                f"{m} {s.get(m + '_mean', float('nan')):.4f} ({s.get(m + '_std', float('nan')):.4f})"
                for m in METRICS) + f"  [{time.time() - t0:.0f}s]")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
