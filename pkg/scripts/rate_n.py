"""Suboptimality of SPAC versus dataset size n, with a log-log slope fit.

    python3 scripts/rate_n.py [--config configs/rate_n.json] [--jobs 1]
"""

import argparse
import json

from spaclab.harness.config import ExperimentConfig
from spaclab.harness.sweep import fit_rate, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/rate_n.json")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    res = run_sweep(ExperimentConfig.load(args.config), jobs=args.jobs, out_dir=args.out)
    fit = fit_rate(res.rows, "n", "spac-theory")
    for p in fit["points"]:
        print(f"n={p['x']:>6.0f}  median subopt {p['median']:.4f}")
    print(json.dumps({"slope": fit["slope"], "r2": fit["r2"], "target": [-0.75, -0.25],
                      "csv": str(res.csv_path), "failures": res.failures}))


if __name__ == "__main__":
    main()
