"""Reward classes, policy classes, the sigmoid-curvature constant and implicit rewards."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .bandit import Bandit, SoftmaxPolicy, as_table
from .errors import DomainError
from .preference import Seed, make_rng


@dataclass(frozen=True, eq=False)
class FiniteRewardClass:
    """Explicit finite set of reward tables sharing the sup-norm bound ``R``."""

    members: np.ndarray  # (size, num_states, num_actions)
    R: float
    contains_r_star: bool = False

    def __post_init__(self):
        m = np.array(self.members, dtype=float)
        if m.ndim != 3 or len(m) == 0:
            raise DomainError("a reward class needs at least one (S, A) member")
        if np.any(np.abs(m) > self.R):
            raise DomainError("a member exceeds the reward bound R")
        m.setflags(write=False)
        object.__setattr__(self, "members", m)

    def __len__(self) -> int:
        return len(self.members)

    def __getitem__(self, i) -> np.ndarray:
        return self.members[i]

    @property
    def log_cardinality(self) -> float:
        return math.log(len(self))

    def subclass(self, idx) -> "FiniteRewardClass":
        idx = list(idx)
        return FiniteRewardClass(self.members[idx], self.R, self.contains_r_star and idx[:1] == [0])

    def to_dict(self) -> dict:
        return {"R": self.R, "contains_r_star": self.contains_r_star,
                "members": self.members.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FiniteRewardClass":
        return cls(np.asarray(d["members"], float), float(d["R"]), bool(d["contains_r_star"]))

    def to_json(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "FiniteRewardClass":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class BoxRewardClass:
    """All reward tables with entries in [-R, R]; ``R = inf`` means unconstrained."""

    R: float = math.inf

    def project(self, f: np.ndarray) -> np.ndarray:
        return f if math.isinf(self.R) else np.clip(f, -self.R, self.R)


RewardClass = Union[FiniteRewardClass, BoxRewardClass]


@dataclass(frozen=True)
class PolicyClass:
    kind: str  # "tabular_unconstrained" | "softmax_logits"
    shape: tuple[int, int]

    def __post_init__(self):
        if self.kind not in ("tabular_unconstrained", "softmax_logits"):
            raise DomainError(f"unknown policy class {self.kind!r}")

    def contains(self, pi) -> bool:
        p = as_table(pi)
        if p.shape != tuple(self.shape):
            return False
        if self.kind == "softmax_logits":
            return isinstance(pi, SoftmaxPolicy) or bool(np.all(p > 0))
        return bool(np.all(p > 0) and np.allclose(p.sum(axis=1), 1.0, atol=1e-12))


def make_class(bandit: Bandit, size: int, mode: str = "perturb_r_star", seed: Seed = 0,
               amplitude=0.5) -> FiniteRewardClass:
    """Build a finite reward class around (or independent of) ``bandit.r_star``.

    ``amplitude`` may be a scalar or an (S, A) array of per-entry noise
    half-widths; perturbations are uniform and the result is clipped to
    [-R, R].
    """
    if size < 1:
        raise DomainError("class size must be at least 1")
    rng = make_rng(seed)
    S, A, R = bandit.num_states, bandit.num_actions, bandit.R
    if mode == "perturb_r_star":
        amp = np.broadcast_to(np.asarray(amplitude, dtype=float), (S, A))
        noise = rng.uniform(-1.0, 1.0, size=(size - 1, S, A)) * amp
        others = np.clip(bandit.r_star[None] + noise, -R, R)
        members = np.concatenate([bandit.r_star[None], others])
        return FiniteRewardClass(members, R, contains_r_star=True)
    if mode == "random":
        members = rng.uniform(-R, R, size=(size, S, A))
        return FiniteRewardClass(members, R, contains_r_star=False)
    raise DomainError(f"unknown class mode {mode!r}")


def kappa(R: float) -> float:
    """1 / min_{|z| <= R} sigma'(z) = 1 / (sigma(R)(1 - sigma(R))) = 2 + 2 cosh R."""
    if R < 0:
        raise DomainError("R must be non-negative")
    return 2.0 + 2.0 * math.cosh(R)


def center_rows(f: np.ndarray) -> np.ndarray:
    return f - f.mean(axis=1, keepdims=True)


def implicit_reward(pi, pi_t, eta: float) -> np.ndarray:
    """eta * log(pi / pi_t) with the free per-state constant fixed by mean-centering."""
    if not eta > 0:
        raise DomainError("eta must be positive")
    if isinstance(pi_t, SoftmaxPolicy):
        log_t = pi_t.log_table()
    else:
        pt = as_table(pi_t)
        if np.any(pt <= 0):
            raise DomainError("pi_t must be strictly positive")
        log_t = np.log(pt)
    logp = pi.log_table() if isinstance(pi, SoftmaxPolicy) else np.log(as_table(pi))
    return center_rows(eta * (logp - log_t))
