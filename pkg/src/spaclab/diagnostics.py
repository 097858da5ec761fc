"""Exact theory quantities on tabular instances: coverage constants, the
four-term suboptimality decomposition, the mirror-descent regret bound and an
MLE concentration probe. Everything is an exact finite sum; nothing here
samples except the probe's datasets."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .bandit import Bandit, as_table, optimal_policy, suboptimality
from .errors import DomainError
from .function_spaces import FiniteRewardClass, RewardClass, kappa
from .preference import sample_dataset, sigmoid


def _e(rho, pi, f) -> float:
    """E_{x~rho, y~pi(.|x)} f(x, y)."""
    return float(rho @ np.einsum("xy,xy->x", as_table(pi), np.asarray(f, float)))


def concentrability(bandit: Bandit, F, pi_star, pi_ref) -> float:
    """Single-policy concentrability over a finite reward class.

    Square root of the sup over f of
    (E_{rho x pi* x pi_ref}[Z])^2 / E_{rho x pi_ref x pi_ref}[Z^2],
    Z = r*(x,y1) - r*(x,y2) - f(x,y1) + f(x,y2), with 0/0 = 0 and c/0 = inf.
    """
    members = F.members if isinstance(F, FiniteRewardClass) else np.asarray(F, float)
    if members.ndim == 2:
        members = members[None]
    ps, pr, rho = as_table(pi_star), as_table(pi_ref), bandit.rho
    d = bandit.r_star[None] - members  # (k, S, A)
    mean_star = np.einsum("xy,kxy->kx", ps, d)
    mean_ref = np.einsum("xy,kxy->kx", pr, d)
    second_ref = np.einsum("xy,kxy->kx", pr, d * d)
    num = (np.einsum("x,kx->k", rho, mean_star - mean_ref)) ** 2
    # E_{y1,y2 ~ pi_ref} (d(y1) - d(y2))^2 = 2 Var_{pi_ref}(d)
    den = np.einsum("x,kx->k", rho, 2.0 * (second_ref - mean_ref ** 2))
    den = np.maximum(den, 0.0)
    scale = max(1.0, float(np.max(np.abs(d))) ** 2)
    num = np.where(num <= 1e-26 * scale, 0.0, num)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(num == 0.0, 0.0, np.where(den > 0, num / den, np.inf))
    return float(math.sqrt(np.max(ratio)))


def density_ratio(pi_star, pi_ref) -> float:
    ps, pr = as_table(pi_star), as_table(pi_ref)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(ps > 0, np.where(pr > 0, ps / np.where(pr > 0, pr, 1.0), np.inf), 0.0)
    return float(np.max(r))


def c_kl(rho, pi_star, pi_init) -> float:
    """E_{x~rho} KL(pi*(.|x) || pi_init(.|x)); +inf on a support violation."""
    ps, pi0 = as_table(pi_star), as_table(pi_init)
    if np.any((ps > 0) & (pi0 <= 0)):
        return math.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(ps > 0, ps * (np.log(np.where(ps > 0, ps, 1.0)) - np.log(np.where(pi0 > 0, pi0, 1.0))), 0.0)
    return float(np.asarray(rho, float) @ terms.sum(axis=1))


@dataclass
class TheoryConstants:
    C: float
    c_KL: float
    kappa: float
    density_ratio: float
    log_card_F: float

    def to_dict(self) -> dict:
        return asdict(self)


def theory_constants(bandit: Bandit, F: RewardClass, pi_star, pi_ref, pi_init) -> TheoryConstants:
    finite = isinstance(F, FiniteRewardClass)
    return TheoryConstants(
        C=concentrability(bandit, F, pi_star, pi_ref) if finite else math.nan,
        c_KL=c_kl(bandit.rho, pi_star, pi_init),
        kappa=kappa(F.R if finite or not math.isinf(F.R) else bandit.R),
        density_ratio=density_ratio(pi_star, pi_ref),
        log_card_F=F.log_cardinality if finite else math.inf,
    )


@dataclass
class DecompositionReport:
    I1: list
    I2: list
    I3: list
    I4: list
    subopt: list
    residual: list

    @property
    def max_residual(self) -> float:
        return max(self.residual) if self.residual else 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def decompose(bandit: Bandit, run, pi_ref) -> DecompositionReport:
    """Split subopt(pi_t) into I1 + I2 + I3 - I4 for every iterate with a critic."""
    if not run.critics:
        raise DomainError("run has no critic trace to decompose")
    rho, r = bandit.rho, bandit.r_star
    ps = optimal_policy(bandit)
    rep = DecompositionReport([], [], [], [], [], [])
    for pi_t, f in zip(run.policies, run.critics):
        f = np.asarray(f, float)
        e_star_f, e_ref_f, e_t_f = _e(rho, ps, f), _e(rho, pi_ref, f), _e(rho, pi_t, f)
        e_star_r, e_ref_r, e_t_r = _e(rho, ps, r), _e(rho, pi_ref, r), _e(rho, pi_t, r)
        i1 = (e_star_r - e_star_f) - (e_ref_r - e_ref_f)
        i2 = e_star_f - e_t_f
        i3 = e_t_f - e_ref_f
        i4 = e_t_r - e_ref_r
        s = suboptimality(bandit, pi_t)
        rep.I1.append(i1)
        rep.I2.append(i2)
        rep.I3.append(i3)
        rep.I4.append(i4)
        rep.subopt.append(s)
        rep.residual.append(abs(s - (i1 + i2 + i3 - i4)))
    return rep


@dataclass
class RegretCheck:
    lhs: float
    rhs: float
    holds: bool

    def to_dict(self) -> dict:
        return asdict(self)


def regret_check(run, rho, pi_star, pi_init, eta: float, R: float) -> RegretCheck:
    """Cumulative regret of the policy iterates against pi* on the critic sequence,
    compared with 2 R^2 T / eta + eta * c_KL."""
    rho = np.asarray(rho, float)
    terms = [_e(rho, pi_star, f) - _e(rho, pi_t, f) for pi_t, f in zip(run.policies, run.critics)]
    T = len(terms)
    lhs = float(math.fsum(terms))
    rhs = 2.0 * R * R * T / eta + eta * c_kl(rho, pi_star, pi_init)
    return RegretCheck(lhs, rhs, bool(lhs <= rhs + 1e-9))


def expected_tv2(bandit: Bandit, pi_ref, f) -> float:
    """E_{x~rho, y1,y2~pi_ref} TV(P_f(.|x,y1,y2), P(.|x,y1,y2))^2, exactly."""
    f = np.asarray(f, float)
    pr = as_table(pi_ref)
    pf = sigmoid(f[:, :, None] - f[:, None, :])
    p = sigmoid(bandit.r_star[:, :, None] - bandit.r_star[:, None, :])
    # TV between two Bernoullis is |p - q|
    tv2 = (pf - p) ** 2
    return float(np.einsum("x,xa,xb,xab->", bandit.rho, pr, pr, tv2))


def loglog_fit(xs, ys) -> dict:
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    A = np.vstack([lx, np.ones_like(lx)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    pred = A @ np.array([slope, intercept])
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum((ly - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2}


def mle_concentration_probe(bandit: Bandit, pi_ref, F: RewardClass, n_grid, seeds,
                            optimizer=None) -> dict:
    """Mean exact TV^2 of the NLL minimiser at each n, and the log-log slope."""
    from .learners import mle

    rows = []
    for n in n_grid:
        vals = []
        for s in seeds:
            D = sample_dataset(bandit, pi_ref, int(n), [int(s), int(n)])
            vals.append(expected_tv2(bandit, pi_ref, mle(D, F, optimizer)))
        rows.append({"n": int(n), "mean_tv2": float(np.mean(vals)), "values": vals})
    means = [r["mean_tv2"] for r in rows]
    fit = loglog_fit(n_grid, means) if len(rows) >= 2 and all(m > 0 for m in means) else None
    return {"rows": rows, "slope": None if fit is None else fit["slope"], "fit": fit}


__all__ = [
    "concentrability", "density_ratio", "c_kl", "TheoryConstants", "theory_constants",
    "DecompositionReport", "decompose", "RegretCheck", "regret_check", "expected_tv2",
    "mle_concentration_probe", "loglog_fit",
]
