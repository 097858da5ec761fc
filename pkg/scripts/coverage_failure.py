"""Greedy MLE versus SPAC on the sparse-coverage instance.

    python3 scripts/coverage_failure.py [--config configs/coverage.json]
"""

import argparse
import json

import numpy as np

from spaclab.harness.config import ExperimentConfig
from spaclab.harness.sweep import run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/coverage.json")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    res = run_sweep(ExperimentConfig.load(args.config), jobs=args.jobs, out_dir=args.out)
    summary = {}
    for algo in sorted({r["algo"] for r in res.rows}):
        sub = np.array([float(r["subopt"]) for r in res.rows
                        if r["algo"] == algo and r["status"] == "ok"])
        summary[algo] = {"median": float(np.median(sub)), "frac_ge_half": float(np.mean(sub >= 0.5)),
                         "runs": int(sub.size)}
    if {"greedy", "spac-theory"} <= summary.keys():
        summary["ratio"] = summary["greedy"]["median"] / summary["spac-theory"]["median"]
    summary["csv"] = str(res.csv_path)
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
