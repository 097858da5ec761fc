"""Sweeps over (algorithm, n, T, lambda, eta, seed) with a resumable CSV."""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from itertools import product
from pathlib import Path
from typing import Iterable

import numpy as np

from ..bandit import optimal_policy, suboptimality
from ..diagnostics import c_kl, concentrability, loglog_fit, regret_check
from ..errors import DomainError
from ..function_spaces import FiniteRewardClass, kappa
from ..learners import (RunRecord, dpo_train, greedy_mle, rlhf_two_step,
                        spac_practical, spac_theoretical, spin_train)
from ..preference import sample_dataset
from .config import (ExperimentConfig, build_bandit, build_class, build_reference,
                     effective_eta, effective_lambda)
from .instances import uniform_policy

HEADER = ["algo", "n", "T", "lambda", "eta", "seed", "subopt", "walltime_ms", "C", "c_kl",
          "kappa", "regret_lhs", "regret_rhs", "status"]
KEY = ("algo", "n", "T", "lambda", "eta", "seed")


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return ""
        return repr(v)
    return str(v)


@dataclass
class Cell:
    algo: str
    n: int
    T: int
    lam: float
    eta: float
    seed: int


@dataclass
class RunOutcome:
    row: dict
    policy: object = None
    run: RunRecord | None = None
    context: dict | None = None


def cells(cfg: ExperimentConfig) -> list[Cell]:
    return [Cell(a, int(n), int(T), float(l), float(e), int(s))
            for n, T, l, e, s, a in product(cfg.n, cfg.T, cfg.lam, cfg.eta, cfg.seeds, cfg.learners)]


def run_cell(cfg: ExperimentConfig, cell: Cell, keep: bool = False) -> RunOutcome:
    """Execute one (algorithm, cell, seed); failures become rows with an error status."""
    bandit, inst_ref = build_bandit(cfg.bandit, cell.seed)
    pi_ref = build_reference(cfg.reference, bandit, inst_ref, cell.seed)
    F = build_class(cfg.reward_class, bandit, pi_ref, cell.seed)
    pi_init = pi_ref if cfg.pi_init == "reference" else uniform_policy(bandit)
    pi_star = optimal_policy(bandit)
    ckl = c_kl(bandit.rho, pi_star, pi_init)
    lam = effective_lambda(cfg, cell.lam, cell.n)
    eta = effective_eta(cfg, cell.eta, cell.T, bandit.R, ckl)
    finite = isinstance(F, FiniteRewardClass)
    row = {
        "algo": cell.algo, "n": cell.n, "T": cell.T, "lambda": lam, "eta": eta, "seed": cell.seed,
        "subopt": None, "walltime_ms": None,
        "C": concentrability(bandit, F, pi_star, pi_ref) if finite else None,
        "c_kl": ckl, "kappa": kappa(F.R if finite or not math.isinf(F.R) else bandit.R),
        "regret_lhs": None, "regret_rhs": None, "status": "ok",
    }
    base = cfg.learner(cell.algo)
    lc = replace(base, T=cell.T, eta=eta, lam=lam, seed=cell.seed,
                 critic_mode="enumerate" if finite else "gradient")
    alpha = base.alpha if "alpha" in cfg.learners.get(cell.algo, {}) else eta
    t0 = time.perf_counter()
    run = None
    try:
        D = sample_dataset(bandit, pi_ref, cell.n, [cell.seed, cell.n])
        if cell.algo == "spac-theory":
            run = spac_theoretical(D, pi_init, F, lc)
            policy = run.mixture
            rc = regret_check(run, bandit.rho, pi_star, pi_init, eta,
                              F.R if not math.isinf(F.R) else bandit.R)
            row["regret_lhs"], row["regret_rhs"] = rc.lhs, rc.rhs
        elif cell.algo == "spac":
            run = spac_practical(D, pi_init, lc)
            policy = run.mixture
        elif cell.algo == "spin":
            run = spin_train(D, pi_init, eta, cell.T, lc.optimizer, smoothed=lc.smoothed,
                             ld_mode=lc.ld_mode, seed=cell.seed)
            policy = run.mixture
        elif cell.algo == "dpo":
            policy = dpo_train(D, pi_ref, alpha, lc.optimizer)
        elif cell.algo == "rlhf2":
            policy = rlhf_two_step(D, pi_ref, F, alpha)
        elif cell.algo == "greedy":
            policy = greedy_mle(D, F)
        else:
            raise DomainError(f"unknown algorithm {cell.algo!r}")
        row["subopt"] = suboptimality(bandit, policy)
    except Exception as exc:  # noqa: BLE001 - recorded, never aborts the sweep
        policy = None
        row["status"] = f"error:{type(exc).__name__}"
    if cfg.record_walltime:
        row["walltime_ms"] = round((time.perf_counter() - t0) * 1000.0, 3)
    out = RunOutcome(row)
    if keep:
        out.policy, out.run = policy, run
        out.context = {
            "bandit": bandit.to_dict(),
            "pi_ref": pi_ref.probs.tolist(),
            "pi_init": pi_init.probs.tolist(),
            "reward_class": F.to_dict() if finite else {"box_R": F.R},
            "eta": eta, "lambda": lam, "n": cell.n, "seed": cell.seed,
            "config_sha": cfg.sha(),
        }
    return out


def _worker(args):
    cfg_dict, cell = args
    return run_cell(ExperimentConfig.from_dict(cfg_dict), cell).row


@dataclass
class SweepResult:
    rows: list
    csv_path: Path
    failures: int


def read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_sweep(cfg: ExperimentConfig, jobs: int = 1, out_dir: str | Path | None = None) -> SweepResult:
    """Run every cell x seed, appending rows to ``results.csv`` in a fixed order.

    Rows already present (matched on algo, n, T, lambda, eta, seed) are skipped,
    so an interrupted sweep can be resumed and a finished one is a no-op.
    """
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "results.csv"
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    (out / "sweep_meta.json").write_text(json.dumps({"config_sha": cfg.sha(), "header": HEADER}))
    done = set()
    if path.exists() and path.stat().st_size > 0:
        done = {tuple(r[k] for k in KEY) for r in read_rows(path)}
    else:
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerow(HEADER)

    todo = []
    for cell in cells(cfg):
        # the effective lambda/eta only depend on the cell, so recompute the key cheaply
        bandit, inst_ref = build_bandit(cfg.bandit, cell.seed)
        pi_init = (build_reference(cfg.reference, bandit, inst_ref, cell.seed)
                   if cfg.pi_init == "reference" else uniform_policy(bandit))
        ckl = c_kl(bandit.rho, optimal_policy(bandit), pi_init)
        key = (cell.algo, str(cell.n), str(cell.T), fmt(effective_lambda(cfg, cell.lam, cell.n)),
               fmt(effective_eta(cfg, cell.eta, cell.T, bandit.R, ckl)), str(cell.seed))
        if key not in done:
            todo.append(cell)
            done.add(key)

    def results() -> Iterable[dict]:
        if jobs <= 1:
            for c in todo:
                yield run_cell(cfg, c).row
        else:
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                yield from ex.map(_worker, [(cfg.to_dict(), c) for c in todo])

    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        for row in results():
            w.writerow([fmt(row[k]) for k in HEADER])
            fh.flush()
    rows = read_rows(path)
    failures = sum(1 for r in rows if r["status"] != "ok")
    return SweepResult(rows, path, failures)


def fit_rate(rows: list[dict], axis: str = "n", algo: str | None = None) -> dict:
    """Least-squares fit of log(median subopt) on log(axis value)."""
    if axis not in ("n", "T"):
        raise DomainError("axis must be 'n' or 'T'")
    groups: dict[float, list[float]] = {}
    for r in rows:
        if r.get("status", "ok") != "ok" or (algo is not None and r["algo"] != algo):
            continue
        groups.setdefault(float(r[axis]), []).append(float(r["subopt"]))
    if len(groups) < 3:
        raise DomainError(f"need at least 3 distinct {axis} values, got {len(groups)}")
    xs = sorted(groups)
    med = [float(np.median(groups[x])) for x in xs]
    if any(m <= 0 for m in med):
        raise DomainError("median suboptimality must be positive to take logs")
    fit = loglog_fit(xs, med)
    fit["axis"] = axis
    fit["points"] = [{"x": x, "median": m} for x, m in zip(xs, med)]
    return fit


__all__ = ["HEADER", "Cell", "RunOutcome", "SweepResult", "cells", "run_cell", "run_sweep",
           "fit_rate", "read_rows"]
