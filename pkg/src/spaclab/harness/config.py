"""Experiment configuration: one JSON document per experiment."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Union

import numpy as np

from ..bandit import Bandit, TabularPolicy, as_table, sha256_json
from ..function_spaces import BoxRewardClass, FiniteRewardClass, RewardClass, make_class
from ..learners import DEFAULT_ETA, DEFAULT_LAMBDA, LearnerConfig
from .instances import (make_sparse_coverage_instance, random_bandit, random_policy,
                        sparse_coverage_amplitude, uniform_policy)

ALGOS = ("spac", "spac-theory", "dpo", "spin", "rlhf2", "greedy")


class ConfigError(ValueError):
    pass


@dataclass
class BanditSpec:
    generator: str = "random"  # random | sparse_coverage | file
    num_states: int = 4
    num_actions: int = 4
    R: float = 1.0
    rho: str = "dirichlet"
    gap: float = 1.0
    coverage_eps: float = 0.01
    path: str | None = None
    # fixed instance seed; None draws a fresh instance for every run seed
    seed: int | None = None


@dataclass
class ReferenceSpec:
    kind: str = "uniform"  # uniform | dirichlet | instance | file
    concentration: float = 1.0
    floor: float = 0.0
    path: str | None = None


@dataclass
class ClassSpec:
    kind: str = "finite"  # finite | box | r_star
    size: int = 64
    mode: str = "perturb_r_star"
    amplitude: Any = 0.5  # float, or "sparse" for the sparse-coverage widths
    R: float | None = None  # box bound; defaults to the bandit's R


@dataclass
class Schedules:
    # "fixed": axis values are used as is; "sqrt_n": lambda = value * sqrt(n)
    # "theory": eta = value * sqrt(R^2 T / c_KL)
    lam: str = "fixed"
    eta: str = "fixed"


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    bandit: BanditSpec = field(default_factory=BanditSpec)
    reference: ReferenceSpec = field(default_factory=ReferenceSpec)
    reward_class: ClassSpec = field(default_factory=ClassSpec)
    learners: dict = field(default_factory=lambda: {"spac-theory": {}})
    n: list = field(default_factory=lambda: [512])
    T: list = field(default_factory=lambda: [20])
    lam: list = field(default_factory=lambda: [DEFAULT_LAMBDA])
    eta: list = field(default_factory=lambda: [DEFAULT_ETA])
    seeds: list = field(default_factory=lambda: [0])
    schedules: Schedules = field(default_factory=Schedules)
    pi_init: str = "reference"  # reference | uniform
    output_dir: str | None = None
    record_walltime: bool = False

    def __post_init__(self):
        for axis in ("n", "T", "lam", "eta", "seeds"):
            vals = getattr(self, axis)
            if not isinstance(vals, list) or not vals:
                raise ConfigError(f"sweep axis {axis!r} must be a non-empty list")
        unknown = set(self.learners) - set(ALGOS)
        if unknown:
            raise ConfigError(f"unknown algorithms {sorted(unknown)}; choose from {ALGOS}")
        if not self.learners:
            raise ConfigError("no learners configured")
        if self.output_dir is None:
            self.output_dir = str(Path("runs") / self.name)
        if self.schedules.lam not in ("fixed", "sqrt_n"):
            raise ConfigError(f"unknown lambda schedule {self.schedules.lam!r}")
        if self.schedules.eta not in ("fixed", "theory"):
            raise ConfigError(f"unknown eta schedule {self.schedules.eta!r}")
        if self.pi_init not in ("reference", "uniform"):
            raise ConfigError(f"unknown pi_init {self.pi_init!r}")
        for algo, d in self.learners.items():
            try:
                LearnerConfig.from_dict(d)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad learner config for {algo}: {exc}") from None

    # -------------------------------------------------------------- (de)serialisation

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        d["schedules"] = {"lambda": self.schedules.lam, "eta": self.schedules.eta}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        try:
            if "lambda" in d:
                d["lam"] = d.pop("lambda")
            sub = {"bandit": BanditSpec, "reference": ReferenceSpec, "reward_class": ClassSpec}
            for key, typ in sub.items():
                if key in d:
                    d[key] = typ(**d[key])
            if "schedules" in d:
                s = dict(d["schedules"])
                d["schedules"] = Schedules(lam=s.get("lambda", "fixed"), eta=s.get("eta", "fixed"))
            return cls(**d)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None

    def sha(self) -> str:
        return sha256_json(self.to_dict())

    def learner(self, algo: str) -> LearnerConfig:
        return LearnerConfig.from_dict(self.learners.get(algo, {}))


# ------------------------------------------------------------------ instance building

def build_bandit(spec: BanditSpec, seed: int) -> tuple[Bandit, TabularPolicy | None]:
    """The bandit for one run, plus the reference policy when the generator fixes it."""
    s = seed if spec.seed is None else spec.seed
    if spec.generator == "random":
        return random_bandit(spec.num_states, spec.num_actions, spec.R, [s, 11], spec.rho), None
    if spec.generator == "sparse_coverage":
        return make_sparse_coverage_instance(spec.num_states, spec.num_actions, spec.gap,
                                             spec.coverage_eps, [s, 11], spec.R)
    if spec.generator == "file":
        if not spec.path:
            raise ConfigError("file generator needs a path")
        return Bandit.from_json(spec.path), None
    raise ConfigError(f"unknown bandit generator {spec.generator!r}")


def build_reference(spec: ReferenceSpec, bandit: Bandit, instance_ref, seed: int) -> TabularPolicy:
    if spec.kind == "instance":
        if instance_ref is None:
            raise ConfigError("this bandit generator does not provide a reference policy")
        return instance_ref
    if spec.kind == "uniform":
        return instance_ref if instance_ref is not None else uniform_policy(bandit)
    if spec.kind == "dirichlet":
        return random_policy(bandit.num_states, bandit.num_actions, [seed, 13],
                             spec.concentration, spec.floor)
    if spec.kind == "file":
        return TabularPolicy(np.asarray(json.loads(Path(spec.path).read_text()), float))
    raise ConfigError(f"unknown reference kind {spec.kind!r}")


def build_class(spec: ClassSpec, bandit: Bandit, pi_ref, seed: int) -> RewardClass:
    if spec.kind == "box":
        return BoxRewardClass(bandit.R if spec.R is None else spec.R)
    if spec.kind == "r_star":
        return FiniteRewardClass(bandit.r_star[None], bandit.R, contains_r_star=True)
    if spec.kind == "finite":
        amp = spec.amplitude
        if amp == "sparse":
            amp = sparse_coverage_amplitude(bandit, pi_ref)
        return make_class(bandit, spec.size, spec.mode, [seed, 17], amp)
    raise ConfigError(f"unknown reward class kind {spec.kind!r}")


def effective_lambda(cfg: ExperimentConfig, lam: float, n: int) -> float:
    return lam * math.sqrt(n) if cfg.schedules.lam == "sqrt_n" else lam


def effective_eta(cfg: ExperimentConfig, eta: float, T: int, R: float, ckl: float) -> float:
    if cfg.schedules.eta == "theory":
        return eta * math.sqrt(R * R * T / max(ckl, 1e-12))
    return eta


def policy_json(pi) -> list:
    return as_table(pi).tolist()
