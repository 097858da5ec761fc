"""Finite contextual bandits, tabular policies, values and suboptimality."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import DomainError

ROW_TOL = 1e-12
MAX_SIZE = 64


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_rows(probs: np.ndarray, what: str) -> None:
    if probs.ndim != 2:
        raise DomainError(f"{what} must be a 2-d table, got shape {probs.shape}")
    if not np.all(np.isfinite(probs)) or np.any(probs < 0):
        raise DomainError(f"{what} has negative or non-finite entries")
    err = np.max(np.abs(probs.sum(axis=1) - 1.0)) if probs.size else 0.0
    if err > ROW_TOL * max(1, probs.shape[1]):
        raise DomainError(f"{what} rows must sum to 1 (max error {err:.3g})")


@dataclass(frozen=True, eq=False)
class Bandit:
    """Ground-truth environment: prompt distribution ``rho`` and reward table ``r_star``."""

    num_states: int
    num_actions: int
    rho: np.ndarray
    r_star: np.ndarray
    R: float

    def __post_init__(self):
        object.__setattr__(self, "rho", _frozen(self.rho))
        object.__setattr__(self, "r_star", _frozen(self.r_star))
        if not (1 <= self.num_states <= MAX_SIZE and 1 <= self.num_actions <= MAX_SIZE):
            raise DomainError("num_states and num_actions must lie in [1, 64]")
        if self.rho.shape != (self.num_states,):
            raise DomainError("rho has the wrong shape")
        if self.r_star.shape != (self.num_states, self.num_actions):
            raise DomainError("r_star has the wrong shape")
        if np.any(self.rho < 0) or abs(self.rho.sum() - 1.0) > ROW_TOL:
            raise DomainError("rho must be a probability vector")
        if not self.R > 0:
            raise DomainError("R must be positive")
        if np.any(np.abs(self.r_star) > self.R):
            raise DomainError("r_star exceeds the reward bound R")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.num_states, self.num_actions)

    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "rho": self.rho.tolist(),
            "r_star": self.r_star.tolist(),
            "R": float(self.R),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Bandit":
        return cls(int(d["num_states"]), int(d["num_actions"]),
                   np.asarray(d["rho"], float), np.asarray(d["r_star"], float), float(d["R"]))

    def to_json(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "Bandit":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def sha(self) -> str:
        return sha256_json(self.to_dict())

    def __eq__(self, other):
        if not isinstance(other, Bandit):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def sha256_json(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class TabularPolicy:
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _frozen(self.probs))
        _check_rows(self.probs, "policy")

    @classmethod
    def uniform(cls, num_states: int, num_actions: int) -> "TabularPolicy":
        return cls(np.full((num_states, num_actions), 1.0 / num_actions))

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape

    def table(self) -> np.ndarray:
        return self.probs

    def log_table(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.probs)

    def sha(self) -> str:
        return sha256_json(self.probs.tolist())


@dataclass(frozen=True, eq=False)
class SoftmaxPolicy:
    logits: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "logits", _frozen(self.logits))
        if self.logits.ndim != 2:
            raise DomainError("logits must be a 2-d table")

    @classmethod
    def from_policy(cls, policy: "Policy") -> "SoftmaxPolicy":
        if isinstance(policy, SoftmaxPolicy):
            return policy
        logp = as_table(policy)
        with np.errstate(divide="ignore"):
            logp = np.log(logp)
        if not np.all(np.isfinite(logp)):
            raise DomainError("softmax policies need strictly positive probabilities")
        return cls(logp)

    @property
    def shape(self) -> tuple[int, int]:
        return self.logits.shape

    def log_table(self) -> np.ndarray:
        z = self.logits - self.logits.max(axis=1, keepdims=True)
        return z - np.log(np.exp(z).sum(axis=1, keepdims=True))

    def table(self) -> np.ndarray:
        return np.exp(self.log_table())

    def to_tabular(self) -> TabularPolicy:
        p = self.table()
        return TabularPolicy(p / p.sum(axis=1, keepdims=True))


@dataclass(frozen=True, eq=False)
class MixturePolicy:
    """Mixture over whole policies; acts like the weighted average of rows."""

    components: tuple
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise DomainError("a mixture needs at least one component")
        w = np.full(len(comps), 1.0 / len(comps)) if self.weights is None else np.asarray(self.weights, float)
        if w.shape != (len(comps),) or np.any(w < 0) or abs(w.sum() - 1.0) > ROW_TOL:
            raise DomainError("mixture weights must be a probability vector")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def uniform(cls, components: Sequence) -> "MixturePolicy":
        return cls(tuple(components))

    @property
    def shape(self) -> tuple[int, int]:
        return as_table(self.components[0]).shape

    def table(self) -> np.ndarray:
        return sum(w * as_table(c) for w, c in zip(self.weights, self.components))


Policy = Union[TabularPolicy, SoftmaxPolicy, MixturePolicy]


def as_table(pi) -> np.ndarray:
    """Row-stochastic probability table of any policy (or a raw array)."""
    if isinstance(pi, (TabularPolicy, SoftmaxPolicy, MixturePolicy)):
        return pi.table()
    return np.asarray(pi, dtype=float)


def value(bandit: Bandit, pi, x: int) -> float:
    if not 0 <= x < bandit.num_states:
        raise IndexError(f"state {x} out of range [0, {bandit.num_states})")
    p = as_table(pi)
    return float(p[x] @ bandit.r_star[x])


def values(bandit: Bandit, pi) -> np.ndarray:
    return np.einsum("xy,xy->x", as_table(pi), bandit.r_star)


def optimal_policy(bandit: Bandit) -> TabularPolicy:
    # np.argmax returns the first maximal index, which is the tie-break we want
    best = np.argmax(bandit.r_star, axis=1)
    probs = np.zeros(bandit.shape)
    probs[np.arange(bandit.num_states), best] = 1.0
    return TabularPolicy(probs)


def suboptimality(bandit: Bandit, pi) -> float:
    v_star = bandit.r_star.max(axis=1)
    return float(bandit.rho @ (v_star - values(bandit, pi)))


def total_variation(p, q) -> np.ndarray:
    """Per-state total variation distance between two policies."""
    return 0.5 * np.abs(as_table(p) - as_table(q)).sum(axis=1)


def kl_per_state(p, q) -> np.ndarray:
    p, q = as_table(p), as_table(q)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(q)), 0.0)
    return terms.sum(axis=1)
