"""Shared builders and numerical oracles for the test suite."""

import numpy as np

from spaclab.bandit import Bandit, SoftmaxPolicy
from spaclab.harness.instances import random_bandit, random_policy
from spaclab.preference import make_rng, sample_dataset


def instance(seed, S=3, A=4, R=1.0, n=60, floor=0.1):
    """A random bandit, a strictly positive reference policy and a dataset."""
    bandit = random_bandit(S, A, R, [seed, 0])
    ref = random_policy(S, A, [seed, 1], floor=floor)
    D = sample_dataset(bandit, ref, n, [seed, 2])
    return bandit, ref, D


def random_logits(seed, S, A, scale=1.0):
    return SoftmaxPolicy(make_rng([seed, 3]).normal(0.0, scale, size=(S, A)))


def central_diff(fun, x, h=1e-4):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        g[idx] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def one_state(r, R=None):
    r = np.asarray([r], dtype=float)
    return Bandit(1, r.shape[1], np.ones(1), r, R or max(1.0, float(np.abs(r).max())))
