"""Exact expected TV^2 of the reward MLE versus n, with a log-log slope fit.

    python3 scripts/mle_probe.py [--seeds 20] [--S 3 --A 4]
"""

import argparse
import json

from spaclab.diagnostics import mle_concentration_probe
from spaclab.function_spaces import BoxRewardClass
from spaclab.harness.instances import random_bandit, uniform_policy


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--S", type=int, default=3)
    ap.add_argument("--A", type=int, default=4)
    ap.add_argument("--R", type=float, default=1.0)
    ap.add_argument("--instance-seed", type=int, default=0)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--n", type=int, nargs="+", default=[250, 1000, 4000, 16000])
    args = ap.parse_args()
    b = random_bandit(args.S, args.A, args.R, args.instance_seed)
    out = mle_concentration_probe(b, uniform_policy(b), BoxRewardClass(b.R), args.n, range(args.seeds))
    for r in out["rows"]:
        print(f"n={r['n']:>6}  mean TV^2 {r['mean_tv2']:.3e}")
    print(json.dumps({"slope": out["slope"], "target": [-1.4, -0.6]}))


if __name__ == "__main__":
    main()
