"""Training algorithms: self-play with an adversarial critic (closed-form and
practical forms) plus the DPO, SPIN, two-step RLHF and greedy-MLE baselines."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .bandit import MixturePolicy, SoftmaxPolicy, TabularPolicy, as_table, suboptimality
from .errors import DomainError
from .function_spaces import BoxRewardClass, FiniteRewardClass, RewardClass, implicit_reward
from .objectives import (COMPARISONS, critic_objective, dpo_loss, duel_LD_weights, nll_grad,
                         spac_objective, spac_objective_smoothed)
from .optim import OptimizerConfig, OptimResult, minimize
from .preference import PreferenceDataset, log_sigmoid, make_rng

# Appendix defaults of the reference experiments: temperature 0.1, lambda 1.0
DEFAULT_ETA = 0.1
DEFAULT_LAMBDA = 1.0


@dataclass(frozen=True)
class LearnerConfig:
    T: int = 10
    eta: float = DEFAULT_ETA
    lam: float = DEFAULT_LAMBDA
    alpha: float = DEFAULT_ETA
    critic_mode: str = "enumerate"  # or "gradient"
    ld_mode: str = "exact"  # or "sampled"
    comparison: str = "average"
    smoothed: bool = True  # practical variant only
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    critic_optimizer: OptimizerConfig = field(
        default_factory=lambda: OptimizerConfig(max_steps=5000, grad_tol=1e-9))
    seed: int = 0

    def __post_init__(self):
        if self.T < 1:
            raise DomainError("T must be at least 1")
        if not self.eta > 0 or not self.alpha > 0:
            raise DomainError("eta and alpha must be positive")
        if self.lam < 0:
            raise DomainError("lambda must be non-negative")
        if self.critic_mode not in ("enumerate", "gradient"):
            raise DomainError(f"unknown critic_mode {self.critic_mode!r}")
        if self.ld_mode not in ("exact", "sampled"):
            raise DomainError(f"unknown ld_mode {self.ld_mode!r}")
        if self.comparison not in COMPARISONS:
            raise DomainError(f"unknown comparison {self.comparison!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LearnerConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        for key in ("optimizer", "critic_optimizer"):
            if isinstance(d.get(key), dict):
                d[key] = OptimizerConfig(**d[key])
        return cls(**d)


@dataclass
class RunRecord:
    """Per-iteration trace of one training run.

    ``critics[t]`` is the reward table paired with ``policies[t]``; the
    closed-form learner also records a critic for the last policy so that
    every iterate has a complete decomposition.
    """

    algo: str
    policies: list
    critics: list = field(default_factory=list)
    critic_values: list = field(default_factory=list)
    policy_losses: list = field(default_factory=list)
    loss_traces: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    context: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return len(self.policies)

    @property
    def mixture(self) -> MixturePolicy:
        return MixturePolicy.uniform(self.policies)

    def tables(self) -> list:
        return [as_table(p) for p in self.policies]

    def to_dict(self) -> dict:
        return {
            "algo": self.algo,
            "config": self.config,
            "context": self.context,
            "policies": [as_table(p).tolist() for p in self.policies],
            "critics": [np.asarray(f).tolist() for f in self.critics],
            "critic_values": [float(v) for v in self.critic_values],
            "policy_losses": [float(v) for v in self.policy_losses],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(
            algo=d["algo"],
            policies=[TabularPolicy(np.asarray(p)) for p in d["policies"]],
            critics=[np.asarray(f, float) for f in d.get("critics", [])],
            critic_values=list(d.get("critic_values", [])),
            policy_losses=list(d.get("policy_losses", [])),
            config=d.get("config", {}),
            context=d.get("context", {}),
        )

    def to_json(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "RunRecord":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def write_csv(self, path: Union[str, Path], bandit=None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "critic_value", "policy_loss", "subopt"])
            for t in range(self.T):
                cv = self.critic_values[t] if t < len(self.critic_values) else ""
                pl = self.policy_losses[t] if t < len(self.policy_losses) else ""
                so = suboptimality(bandit, self.policies[t]) if bandit is not None else ""
                w.writerow([t + 1, cv, pl, so])


# ------------------------------------------------------------------- building blocks

def _normalize_log(logp: np.ndarray) -> np.ndarray:
    m = np.max(logp, axis=1, keepdims=True)
    return logp - (m + np.log(np.exp(logp - m).sum(axis=1, keepdims=True)))


def _sample_actions(table: np.ndarray, xs: np.ndarray, rng) -> np.ndarray:
    cdf = np.cumsum(table, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(len(xs))
    return np.minimum((u[:, None] >= cdf[xs]).sum(axis=1), table.shape[1] - 1)


def _ld_weights(pi_t, D: PreferenceDataset, ld_mode: str, comparison: str, ys) -> np.ndarray:
    if ld_mode == "exact":
        return duel_LD_weights(pi_t, D, comparison)
    if ys is None:
        raise DomainError("sampled mode needs sampled responses ys")
    S, A = D.num_states, D.num_actions
    P = np.bincount(D.x * A + np.asarray(ys), minlength=S * A).reshape(S, A)
    return (P - D.comparison_counts(comparison)) / D.n


def class_nll(F: FiniteRewardClass, D: PreferenceDataset) -> np.ndarray:
    """Preference NLL of every member of a finite class."""
    tx, ta, tb, tw = D.triples
    z = F.members[:, tx, ta] - F.members[:, tx, tb]
    return -(log_sigmoid(z) @ tw) / D.n


def critic_step(D: PreferenceDataset, pi_t, F: RewardClass, lam: float, ld_mode: str = "exact",
                comparison: str = "average", ys=None, optimizer: OptimizerConfig | None = None,
                init: np.ndarray | None = None, nll_values: np.ndarray | None = None,
                iteration: int = 0) -> tuple[np.ndarray, float]:
    """argmin_f L_D(f, pi_t) + lam * E_D(f) over ``F``; returns (table, objective).

    Finite classes are searched exhaustively (ties go to the lowest index);
    box classes use projected gradient descent.
    """
    if len(D) == 0:
        raise DomainError("the preference dataset is empty")
    if lam < 0:
        raise DomainError("lambda must be non-negative")
    K = _ld_weights(pi_t, D, ld_mode, comparison, ys)
    if isinstance(F, FiniteRewardClass):
        nll = class_nll(F, D) if nll_values is None else nll_values
        obj = np.einsum("kxy,xy->k", F.members, K) + lam * nll
        k = int(np.argmin(obj))
        return F.members[k].copy(), float(obj[k])
    if isinstance(F, BoxRewardClass):
        opt = optimizer or OptimizerConfig(max_steps=5000, grad_tol=1e-9)
        x0 = np.zeros(K.shape) if init is None else init

        def fun(f):
            nll = nll_grad(f, D)
            return float(np.sum(K * f)) + lam * nll.value, K + lam * nll.gradient

        res = minimize(fun, x0, opt, bound=F.R, iteration=iteration)
        return res.x, res.value
    raise DomainError("empty or unsupported reward class")


def mirror_descent_step(pi_t, f_t, eta: float) -> TabularPolicy:
    """pi_{t+1}(y|x) proportional to pi_t(y|x) * exp(f_t(x, y) / eta)."""
    if not eta > 0:
        raise DomainError("eta must be positive")
    with np.errstate(divide="ignore"):
        logp = np.log(as_table(pi_t))
    return TabularPolicy(np.exp(_normalize_log(logp + np.asarray(f_t) / eta)))


# ------------------------------------------------------------------- SPAC

def spac_theoretical(D: PreferenceDataset, pi_init, F: RewardClass,
                     config: LearnerConfig) -> RunRecord:
    """Alternate pessimistic critic fits and exponential-weights policy updates.

    Iterates are carried in log space so long runs with a small temperature
    do not lose precision; the returned tables may underflow to exactly zero
    in that regime.
    """
    if isinstance(F, FiniteRewardClass) and config.critic_mode == "gradient":
        raise DomainError("gradient critic needs a BoxRewardClass")
    if isinstance(F, BoxRewardClass) and config.critic_mode == "enumerate":
        raise DomainError("enumerate critic needs a FiniteRewardClass")
    p0 = as_table(pi_init)
    if np.any(p0 <= 0):
        raise DomainError("pi_init must be strictly positive")
    rng = make_rng([config.seed, 1])
    nll_values = class_nll(F, D) if isinstance(F, FiniteRewardClass) else None
    logp = np.log(p0)
    run = RunRecord("spac-theory", [], config=config.to_dict())
    f_prev = None
    for t in range(1, config.T + 1):
        pi_t = TabularPolicy(np.exp(logp))
        run.policies.append(pi_t)
        ys = _sample_actions(pi_t.probs, D.x, rng) if config.ld_mode == "sampled" else None
        f_t, val = critic_step(D, pi_t, F, config.lam, config.ld_mode, config.comparison, ys,
                               config.critic_optimizer, f_prev, nll_values, iteration=t)
        run.critics.append(f_t)
        run.critic_values.append(val)
        f_prev = f_t
        if t < config.T:
            logp = _normalize_log(logp + f_t / config.eta)
    return run


def spac_practical(D: PreferenceDataset, pi_init, config: LearnerConfig,
                   smoothed: Optional[bool] = None, algo: str = "spac") -> RunRecord:
    """Single-timescale self-play: each iteration minimises the policy objective
    over tabular logits, warm-started at the current iterate.

    ``ld_mode='exact'`` replaces the sampled self-generated responses by the
    exact expectation under pi_t (for both objective variants).
    """
    if len(D) == 0:
        raise DomainError("the preference dataset is empty")
    smoothed = config.smoothed if smoothed is None else smoothed
    loss = spac_objective_smoothed if smoothed else spac_objective
    pi = SoftmaxPolicy.from_policy(pi_init)
    if not np.all(np.isfinite(pi.logits)):
        raise DomainError("pi_init must have finite logits")
    rng = make_rng([config.seed, 2])
    cfg = replace(config, smoothed=smoothed)
    run = RunRecord(algo, [pi.to_tabular()], config=cfg.to_dict())
    theta = pi.logits
    for t in range(1, config.T):
        pi_t = SoftmaxPolicy(theta)
        ys = (_sample_actions(pi_t.table(), D.x, rng) if config.ld_mode == "sampled" else None)

        def fun(th, pi_t=pi_t, ys=ys):
            lv = loss(SoftmaxPolicy(th), pi_t, D, ys, config.comparison, config.eta, config.lam)
            return lv.value, lv.gradient

        res = minimize(fun, theta, config.optimizer, iteration=t, keep_trace=True)
        theta = res.x - res.x.max(axis=1, keepdims=True)
        new = SoftmaxPolicy(theta)
        run.policies.append(new.to_tabular())
        run.critics.append(implicit_reward(new, pi_t, config.eta))
        run.policy_losses.append(res.value)
        run.loss_traces.append(res.trace)
    return run


def spin_train(D: PreferenceDataset, pi_init, eta: float, T: int,
               optimizer: OptimizerConfig | None = None, smoothed: bool = True,
               ld_mode: str = "exact", seed: int = 0) -> RunRecord:
    """The lam = 0 limit with the chosen response as the comparison."""
    cfg = LearnerConfig(T=T, eta=eta, lam=0.0, comparison="chosen", smoothed=smoothed,
                        ld_mode=ld_mode, optimizer=optimizer or OptimizerConfig(), seed=seed)
    return spac_practical(D, pi_init, cfg, algo="spin")


# ------------------------------------------------------------------- baselines

def dpo_fit(D: PreferenceDataset, pi_ref, alpha: float,
            optimizer: OptimizerConfig | None = None) -> OptimResult:
    if len(D) == 0:
        raise DomainError("the preference dataset is empty")
    ref = SoftmaxPolicy.from_policy(pi_ref)

    def fun(th):
        lv = dpo_loss(SoftmaxPolicy(th), ref, D, alpha)
        return lv.value, lv.gradient

    return minimize(fun, ref.logits, optimizer or OptimizerConfig(), keep_trace=True)


def dpo_train(D: PreferenceDataset, pi_ref, alpha: float,
              optimizer: OptimizerConfig | None = None) -> SoftmaxPolicy:
    return SoftmaxPolicy(dpo_fit(D, pi_ref, alpha, optimizer).x)


def mle(D: PreferenceDataset, F: RewardClass, optimizer: OptimizerConfig | None = None) -> np.ndarray:
    """Reward table minimising the preference NLL over ``F``."""
    if len(D) == 0:
        raise DomainError("the preference dataset is empty")
    if isinstance(F, FiniteRewardClass):
        return F.members[int(np.argmin(class_nll(F, D)))].copy()
    opt = optimizer or OptimizerConfig(max_steps=20000, grad_tol=1e-9)
    res = minimize(lambda f: (lambda lv: (lv.value, lv.gradient))(nll_grad(f, D)),
                   np.zeros((D.num_states, D.num_actions)), opt, bound=F.R)
    return res.x


def gibbs_policy(pi_ref, reward: np.ndarray, alpha: float) -> TabularPolicy:
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    with np.errstate(divide="ignore"):
        logp = np.log(as_table(pi_ref))
    return TabularPolicy(np.exp(_normalize_log(logp + reward / alpha)))


def rlhf_two_step(D: PreferenceDataset, pi_ref, F: RewardClass, alpha: float) -> TabularPolicy:
    """MLE reward, then the closed-form KL-regularised maximiser."""
    return gibbs_policy(pi_ref, mle(D, F), alpha)


def argmax_policy(reward: np.ndarray) -> TabularPolicy:
    best = np.argmax(reward, axis=1)
    probs = np.zeros(reward.shape)
    probs[np.arange(len(best)), best] = 1.0
    return TabularPolicy(probs)


def greedy_mle(D: PreferenceDataset, F: RewardClass) -> TabularPolicy:
    return argmax_policy(mle(D, F))


__all__ = [
    "LearnerConfig", "RunRecord", "critic_step", "mirror_descent_step", "spac_theoretical",
    "spac_practical", "spin_train", "dpo_fit", "dpo_train", "mle", "gibbs_policy",
    "rlhf_two_step", "greedy_mle", "argmax_policy", "class_nll", "critic_objective",
]
