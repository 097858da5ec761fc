"""Command line entry point: gen, train, sweep, verify, fit.

Exit codes: 0 success, 1 configuration error, 2 at least one run failed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..bandit import Bandit, TabularPolicy, as_table, optimal_policy
from ..diagnostics import decompose, regret_check, theory_constants
from ..errors import DomainError
from ..function_spaces import BoxRewardClass, FiniteRewardClass
from ..learners import RunRecord
from ..preference import sample_dataset, write_jsonl
from .config import (BanditSpec, ConfigError, ExperimentConfig, build_bandit,
                     build_reference)
from .sweep import Cell, fit_rate, read_rows, run_cell, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_RUN = 0, 1, 2


def _json_default(o):
    if isinstance(o, float) and math.isinf(o):
        return "inf"
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def _clean(o):
    # json cannot carry inf; the sentinel string matches the CSV convention
    if isinstance(o, float):
        return "inf" if math.isinf(o) and o > 0 else ("-inf" if math.isinf(o) else (None if math.isnan(o) else o))
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def _dump(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, default=_json_default)


# ----------------------------------------------------------------------------- gen

def cmd_gen(args) -> int:
    try:
        spec_d = json.loads(Path(args.bandit_spec).read_text())
        ref_kind = spec_d.pop("reference", None)
        spec = BanditSpec(**spec_d)
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise ConfigError(f"bad bandit spec: {exc}") from None
    from .config import ReferenceSpec

    ref_spec = ReferenceSpec(**ref_kind) if isinstance(ref_kind, dict) else ReferenceSpec()
    bandit, inst_ref = build_bandit(spec, args.seed)
    pi_ref = build_reference(ref_spec, bandit, inst_ref, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    # the instance file also records how it was built, so it can be regenerated
    inst = dict(bandit.to_dict(), construction=dict(asdict(spec), seed=args.seed))
    (out / "bandit.json").write_text(json.dumps(inst, sort_keys=True))
    (out / "pi_ref.json").write_text(json.dumps(pi_ref.probs.tolist()))
    D = sample_dataset(bandit, pi_ref, args.n, [args.seed, args.n])
    write_jsonl(D, out / "data.jsonl")
    print(_dump({"bandit": str(out / "bandit.json"), "data": str(out / "data.jsonl"),
                 "n": args.n, "bandit_sha": bandit.sha()}))
    return EXIT_OK


# --------------------------------------------------------------------------- train

def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    d = cfg.to_dict()
    for key, attr in (("n", "n"), ("T", "T"), ("lambda", "lam"), ("eta", "eta"), ("seeds", "seed")):
        v = getattr(args, attr, None)
        if v is not None:
            d[key] = [v]
    if getattr(args, "algo", None):
        d["learners"] = {args.algo: cfg.learners.get(args.algo, {})}
    if getattr(args, "out", None):
        d["output_dir"] = args.out
    return ExperimentConfig.from_dict(d)


def cmd_train(args) -> int:
    cfg = _apply_overrides(ExperimentConfig.load(args.config), args)
    cell = Cell(args.algo, int(cfg.n[0]), int(cfg.T[0]), float(cfg.lam[0]), float(cfg.eta[0]),
                int(cfg.seeds[0]))
    res = run_cell(cfg, cell, keep=True)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{cell.algo}_n{cell.n}_T{cell.T}_s{cell.seed}"
    run = res.run
    if run is None and res.policy is not None:
        run = RunRecord(cell.algo, [TabularPolicy(as_table(res.policy))])
    if run is not None:
        run.config = cfg.to_dict()
        run.context = res.context
        run.context["row"] = _clean(res.row)
        run.to_json(out / f"{stem}.json")
        run.write_csv(out / f"{stem}.csv", Bandit.from_dict(res.context["bandit"]))
    print(_dump({"row": res.row, "run": str(out / f"{stem}.json") if run else None}))
    return EXIT_OK if res.row["status"] == "ok" else EXIT_RUN


# --------------------------------------------------------------------------- sweep

def cmd_sweep(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.out:
        d = cfg.to_dict()
        d["output_dir"] = args.out
        cfg = ExperimentConfig.from_dict(d)
    res = run_sweep(cfg, jobs=args.jobs)
    print(_dump({"csv": str(res.csv_path), "rows": len(res.rows), "failures": res.failures}))
    return EXIT_RUN if res.failures else EXIT_OK


# -------------------------------------------------------------------------- verify

def verify_run(run: RunRecord) -> dict:
    ctx = run.context
    if not ctx or "bandit" not in ctx:
        raise ConfigError("run file carries no bandit context; produce it with `train`")
    bandit = Bandit.from_dict(ctx["bandit"])
    pi_ref = TabularPolicy(np.asarray(ctx["pi_ref"], float))
    pi_init = TabularPolicy(np.asarray(ctx["pi_init"], float))
    rc = ctx.get("reward_class", {})
    F = (BoxRewardClass(float(rc["box_R"])) if "box_R" in rc else FiniteRewardClass.from_dict(rc))
    pi_star = optimal_policy(bandit)
    consts = theory_constants(bandit, F, pi_star, pi_ref, pi_init)
    report = {"algo": run.algo, "constants": consts.to_dict(), "config_sha": ctx.get("config_sha")}
    if run.critics:
        dec = decompose(bandit, run, pi_ref)
        R = F.R if not math.isinf(F.R) else bandit.R
        reg = regret_check(run, bandit.rho, pi_star, pi_init, float(ctx["eta"]), R)
        report["decomposition"] = dec.to_dict()
        report["checks"] = {
            "decomposition_identity": bool(dec.max_residual <= 1e-10),
            "max_residual": dec.max_residual,
            "regret_bound": reg.holds,
            "regret_lhs": reg.lhs,
            "regret_rhs": reg.rhs,
            "concentrability_le_density_ratio": (bool(consts.C <= consts.density_ratio + 1e-12)
                                                 if not math.isnan(consts.C) else None),
        }
    else:
        report["decomposition"] = None
        report["checks"] = {}
    return report


def cmd_verify(args) -> int:
    try:
        run = RunRecord.from_json(args.run)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"cannot read run {args.run}: {exc}") from None
    report = verify_run(run)
    text = _dump(report)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    failed = [k for k, v in report["checks"].items() if v is False]
    return EXIT_RUN if failed else EXIT_OK


# ----------------------------------------------------------------------------- fit

def cmd_fit(args) -> int:
    try:
        rows = read_rows(args.csv)
    except OSError as exc:
        raise ConfigError(str(exc)) from None
    algos = [args.algo] if args.algo else sorted({r["algo"] for r in rows})
    out = {}
    for a in algos:
        try:
            out[a] = fit_rate(rows, args.axis, a)
        except DomainError as exc:
            out[a] = {"error": str(exc)}
    print(_dump(out))
    return EXIT_RUN if any("error" in v for v in out.values()) else EXIT_OK


# ---------------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spaclab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="generate a bandit and a preference dataset")
    g.add_argument("--bandit-spec", required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="one training run")
    t.add_argument("--algo", required=True,
                   choices=["spac", "spac-theory", "dpo", "spin", "rlhf2", "greedy"])
    t.add_argument("--config", required=True)
    t.add_argument("--n", type=int)
    t.add_argument("--T", type=int)
    t.add_argument("--lambda", dest="lam", type=float)
    t.add_argument("--eta", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="run every cell and seed of a config")
    s.add_argument("--config", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="theory diagnostics for a saved run")
    v.add_argument("--run", required=True)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    f = sub.add_parser("fit", help="log-log rate fit of a sweep CSV")
    f.add_argument("--csv", required=True)
    f.add_argument("--axis", choices=["n", "T"], default="n")
    f.add_argument("--algo")
    f.set_defaults(func=cmd_fit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())


__all__ = ["main", "build_parser", "verify_run"]
