import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spaclab.bandit import Bandit, TabularPolicy, optimal_policy, suboptimality
from spaclab.diagnostics import (c_kl, concentrability, decompose, density_ratio, expected_tv2,
                                 loglog_fit, mle_concentration_probe, regret_check,
                                 theory_constants)
from spaclab.errors import DomainError
from spaclab.function_spaces import BoxRewardClass, FiniteRewardClass, make_class
from spaclab.harness.instances import random_bandit, random_policy, uniform_policy
from spaclab.learners import LearnerConfig, RunRecord, spac_practical, spac_theoretical

from helpers import instance

seeds = st.integers(0, 2**20)


def naive_concentrability(b, F, ps, pr):
    best = 0.0
    for f in F.members:
        num = den = 0.0
        for x in range(b.num_states):
            for y1 in range(b.num_actions):
                for y2 in range(b.num_actions):
                    z = b.r_star[x, y1] - b.r_star[x, y2] - f[x, y1] + f[x, y2]
                    num += b.rho[x] * ps[x, y1] * pr[x, y2] * z
                    den += b.rho[x] * pr[x, y1] * pr[x, y2] * z * z
        ratio = 0.0 if num * num <= 1e-26 else (math.inf if den <= 0 else num * num / den)
        best = max(best, ratio)
    return math.sqrt(best)


def test_concentrability_r_star_is_zero():
    b = random_bandit(3, 4, 1.0, 0)
    F = FiniteRewardClass(b.r_star[None], b.R, True)
    assert concentrability(b, F, optimal_policy(b), random_policy(3, 4, 0)) == 0.0


def test_concentrability_matches_double_loop():
    b = random_bandit(3, 4, 1.0, 5)
    F = make_class(b, 16, seed=5)
    ps, pr = optimal_policy(b), random_policy(3, 4, 6)
    assert abs(concentrability(b, F, ps, pr) - naive_concentrability(b, F, ps.probs, pr.probs)) <= 1e-10


@given(seed=seeds)
def test_concentrability_at_most_one_when_on_policy(seed):
    b = random_bandit(3, 4, 1.0, seed)
    F = make_class(b, 8, "random", seed)
    pr = random_policy(3, 4, seed)
    assert concentrability(b, F, pr, pr) <= 1.0 + 1e-12


@given(seed=seeds)
def test_concentrability_below_density_ratio(seed):
    b = random_bandit(3, 4, 1.0, seed)
    F = make_class(b, 8, "random", seed)
    ps, pr = optimal_policy(b), random_policy(3, 4, seed, floor=0.05)
    assert concentrability(b, F, ps, pr) <= density_ratio(ps, pr)


@given(seed=seeds)
def test_concentrability_monotone_in_class(seed):
    b = random_bandit(3, 4, 1.0, seed)
    F = make_class(b, 12, seed=seed, amplitude=1.0)
    ps, pr = optimal_policy(b), random_policy(3, 4, seed)
    vals = [concentrability(b, F.subclass(range(k)), ps, pr) for k in range(1, 13)]
    assert all(a <= c for a, c in zip(vals, vals[1:]))


def test_concentrability_unbounded_sentinel():
    # pi_ref is a point mass, so the denominator vanishes while pi* sees the error
    b = Bandit(1, 2, np.ones(1), np.array([[1.0, 0.0]]), 1.0)
    F = FiniteRewardClass(np.array([[[0.0, 0.0]]]), 1.0)
    assert concentrability(b, F, optimal_policy(b), TabularPolicy([[0.0, 1.0]])) == math.inf


def test_density_ratio_examples():
    pr = random_policy(2, 5, 1)
    assert density_ratio(pr, pr) == 1.0
    b = random_bandit(2, 5, 1.0, 1)
    assert abs(density_ratio(optimal_policy(b), uniform_policy(b)) - 5.0) <= 1e-12
    assert density_ratio(TabularPolicy([[1.0, 0.0]]), TabularPolicy([[0.0, 1.0]])) == math.inf


def test_c_kl_examples():
    b = random_bandit(3, 6, 1.0, 2)
    pr = random_policy(3, 6, 2)
    assert c_kl(b.rho, pr, pr) == 0.0
    assert abs(c_kl(b.rho, optimal_policy(b), uniform_policy(b)) - math.log(6)) <= 1e-12
    off_support = TabularPolicy(np.where(optimal_policy(b).probs > 0, 0.0, 0.2))
    assert c_kl(b.rho, optimal_policy(b), off_support) == math.inf


@given(seed=seeds)
def test_c_kl_naive(seed):
    b = random_bandit(3, 4, 1.0, seed)
    p, q = random_policy(3, 4, [seed, 1]), random_policy(3, 4, [seed, 2], floor=0.01)
    naive = sum(b.rho[x] * sum(p.probs[x, y] * math.log(p.probs[x, y] / q.probs[x, y])
                               for y in range(4) if p.probs[x, y] > 0) for x in range(3))
    assert abs(c_kl(b.rho, p, q) - naive) <= 1e-12


def test_decompose_special_cases():
    b, ref, D = instance(3)
    F = FiniteRewardClass(b.r_star[None], b.R, True)
    run = spac_theoretical(D, ref, F, LearnerConfig(T=5))
    rep = decompose(b, run, ref)
    assert all(abs(i1) <= 1e-15 for i1 in rep.I1)
    assert all(abs(i3 - i4) <= 1e-15 for i3, i4 in zip(rep.I3, rep.I4))
    star = RunRecord("x", [optimal_policy(b)], [np.random.default_rng(0).normal(size=(3, 4))])
    assert abs(decompose(b, star, ref).I2[0]) <= 1e-15
    with pytest.raises(DomainError):
        decompose(b, RunRecord("x", [ref]), ref)


@given(seed=seeds, T=st.integers(1, 8))
def test_decompose_identity(seed, T):
    b, ref, D = instance(seed)
    run = spac_theoretical(D, ref, make_class(b, 16, seed=seed), LearnerConfig(T=T, eta=0.3))
    rep = decompose(b, run, ref)
    assert rep.max_residual <= 1e-10
    assert np.allclose(rep.subopt, [suboptimality(b, p) for p in run.policies])


def test_decompose_practical_run():
    b, ref, D = instance(4)
    run = spac_practical(D, ref, LearnerConfig(T=3))
    assert decompose(b, run, ref).max_residual <= 1e-10


def test_regret_check_trivial_cases():
    b = random_bandit(3, 4, 1.0, 0)
    ref = random_policy(3, 4, 0)
    const = [np.repeat(np.arange(3.0)[:, None], 4, axis=1)] * 4
    run = RunRecord("x", [ref] * 4, const)
    rc = regret_check(run, b.rho, optimal_policy(b), ref, 0.1, 1.0)
    assert abs(rc.lhs) <= 1e-15 and rc.holds
    star = optimal_policy(b)
    rc = regret_check(RunRecord("x", [star], [b.r_star]), b.rho, star, star, 0.1, 1.0)
    assert rc.lhs == 0.0 and rc.holds


@given(seed=seeds, eta=st.sampled_from([0.05, 0.5, 5.0]), R=st.sampled_from([1.0, 4.0]))
def test_regret_bound_holds(seed, eta, R):
    b, ref, D = instance(seed, R=R)
    run = spac_theoretical(D, ref, make_class(b, 8, seed=seed, amplitude=R),
                           LearnerConfig(T=10, eta=eta))
    assert regret_check(run, b.rho, optimal_policy(b), ref, eta, R).holds


def test_theory_constants():
    b = random_bandit(2, 3, 1.0, 0)
    ref = uniform_policy(b)
    tc = theory_constants(b, make_class(b, 4), optimal_policy(b), ref, ref)
    assert tc.kappa == 2 + 2 * math.cosh(1.0) and tc.log_card_F == math.log(4)
    assert abs(tc.c_KL - math.log(3)) <= 1e-12 and tc.density_ratio == 3.0
    box = theory_constants(b, BoxRewardClass(1.0), optimal_policy(b), ref, ref)
    assert math.isnan(box.C) and box.log_card_F == math.inf


@given(seed=seeds)
def test_expected_tv2_oracle(seed):
    b = random_bandit(2, 3, 1.0, seed)
    pr = random_policy(2, 3, seed)
    f = np.random.default_rng(seed).uniform(-1, 1, (2, 3))
    sig = lambda z: 1 / (1 + math.exp(-z))  # noqa: E731
    naive = sum(b.rho[x] * pr.probs[x, a] * pr.probs[x, c]
                * (sig(f[x, a] - f[x, c]) - sig(b.r_star[x, a] - b.r_star[x, c])) ** 2
                for x in range(2) for a in range(3) for c in range(3))
    got = expected_tv2(b, pr, f)
    assert abs(got - naive) <= 1e-14 and 0.0 <= got <= 1.0


def test_mle_probe_r_star_class():
    b = random_bandit(2, 3, 1.0, 0)
    out = mle_concentration_probe(b, uniform_policy(b), FiniteRewardClass(b.r_star[None], 1.0),
                                  [50, 100], range(3))
    assert all(r["mean_tv2"] == 0.0 for r in out["rows"]) and out["slope"] is None


def test_mle_probe_values_in_range():
    b = random_bandit(2, 3, 1.0, 1)
    out = mle_concentration_probe(b, uniform_policy(b), BoxRewardClass(1.0), [100, 400, 1600], range(4))
    assert all(0.0 <= v <= 1.0 for r in out["rows"] for v in r["values"])
    assert out["slope"] < 0


def test_loglog_fit_planted():
    ns = [10, 100, 1000]
    fit = loglog_fit(ns, [3 / math.sqrt(n) for n in ns])
    assert abs(fit["slope"] + 0.5) <= 1e-12 and abs(fit["r2"] - 1.0) <= 1e-12
