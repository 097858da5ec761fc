"""Suboptimality of SPAC versus iteration count T with F = {r*} (optimization error only).

    python3 scripts/rate_T.py [--config configs/rate_T.json]
"""

import argparse
import json

from spaclab.harness.config import ExperimentConfig
from spaclab.harness.sweep import fit_rate, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/rate_T.json")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    res = run_sweep(ExperimentConfig.load(args.config), jobs=args.jobs, out_dir=args.out)
    fit = fit_rate(res.rows, "T", "spac-theory")
    for p in fit["points"]:
        print(f"T={p['x']:>4.0f}  median subopt {p['median']:.4f}")
    print(json.dumps({"slope": fit["slope"], "r2": fit["r2"], "target": [-0.8, -0.2],
                      "csv": str(res.csv_path), "failures": res.failures}))


if __name__ == "__main__":
    main()
