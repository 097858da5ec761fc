"""Instance generators: random bandits, reference policies, and the
sparse-coverage family where plug-in reward maximisation breaks down."""

from __future__ import annotations

import numpy as np

from ..bandit import Bandit, TabularPolicy
from ..errors import DomainError
from ..preference import Seed, make_rng


def random_bandit(num_states: int, num_actions: int, R: float = 1.0, seed: Seed = 0,
                  rho: str = "dirichlet") -> Bandit:
    """Rewards uniform on [-R, R]; prompt weights Dirichlet(1) or uniform."""
    rng = make_rng(seed)
    r_star = rng.uniform(-R, R, size=(num_states, num_actions))
    if rho == "uniform":
        w = np.full(num_states, 1.0 / num_states)
    elif rho == "dirichlet":
        w = rng.dirichlet(np.ones(num_states))
        w = w / w.sum()
    else:
        raise DomainError(f"unknown rho mode {rho!r}")
    return Bandit(num_states, num_actions, w, r_star, R)


def random_policy(num_states: int, num_actions: int, seed: Seed = 0,
                  concentration: float = 1.0, floor: float = 0.0) -> TabularPolicy:
    """Dirichlet rows, optionally mixed with the uniform policy by weight ``floor``."""
    rng = make_rng(seed)
    p = rng.dirichlet(np.full(num_actions, concentration), size=num_states)
    p = (1.0 - floor) * p + floor / num_actions
    return TabularPolicy(p / p.sum(axis=1, keepdims=True))


def uniform_policy(bandit: Bandit) -> TabularPolicy:
    return TabularPolicy.uniform(bandit.num_states, bandit.num_actions)


def make_sparse_coverage_instance(num_states: int, num_actions: int, gap: float,
                                  coverage_eps: float, seed: Seed = 0,
                                  R: float | None = None) -> tuple[Bandit, TabularPolicy]:
    """Per state: one optimal action worth ``gap`` more than every alternative.

    The reference policy gives the optimal action and every "decoy" mass
    ``coverage_eps``; one "common" action takes the remainder. Which action
    plays which role is permuted per state by ``seed``.
    """
    if num_actions < 2:
        raise DomainError("need at least two actions")
    if not 0 < coverage_eps < 1.0 / num_actions and not (num_actions == 2 and coverage_eps == 0.5):
        raise DomainError("coverage_eps must lie in (0, 1/num_actions)")
    if gap <= 0:
        raise DomainError("gap must be positive")
    R = max(1.0, gap / 2) if R is None else R
    if gap / 2 > R:
        raise DomainError("gap / 2 exceeds the reward bound R")
    rng = make_rng(seed)
    r_star = np.full((num_states, num_actions), -gap / 2)
    ref = np.full((num_states, num_actions), coverage_eps)
    for x in range(num_states):
        perm = rng.permutation(num_actions)
        r_star[x, perm[0]] = gap / 2
        ref[x, perm[1]] = 1.0 - (num_actions - 1) * coverage_eps
    rho = np.full(num_states, 1.0 / num_states)
    return Bandit(num_states, num_actions, rho, r_star, R), TabularPolicy(ref)


def sparse_coverage_roles(bandit: Bandit, pi_ref) -> tuple[np.ndarray, np.ndarray]:
    """(optimal action, common action) per state of a sparse-coverage instance."""
    from ..bandit import as_table

    return np.argmax(bandit.r_star, axis=1), np.argmax(as_table(pi_ref), axis=1)


def sparse_coverage_amplitude(bandit: Bandit, pi_ref, decoy: float | None = None,
                              common: float = 0.1) -> np.ndarray:
    """Per-entry perturbation widths for the instance's reward class.

    The class pins the optimal action's reward, wiggles the well-covered
    action slightly, and leaves the rarely seen decoys almost free.
    """
    best, com = sparse_coverage_roles(bandit, pi_ref)
    amp = np.full(bandit.shape, 2.0 * bandit.R if decoy is None else decoy)
    idx = np.arange(bandit.num_states)
    amp[idx, best] = 0.0
    amp[idx, com] = common
    return amp
