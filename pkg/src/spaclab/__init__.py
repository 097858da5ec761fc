"""Tabular laboratory for self-play preference optimisation with an adversarial critic."""

from .bandit import (Bandit, MixturePolicy, SoftmaxPolicy, TabularPolicy, optimal_policy,
                     suboptimality, value)
from .errors import DivergedError, DomainError, IntegrityError, ParseError
from .function_spaces import (BoxRewardClass, FiniteRewardClass, PolicyClass, implicit_reward,
                              kappa, make_class)
from .learners import (LearnerConfig, RunRecord, critic_step, dpo_train, greedy_mle,
                       mirror_descent_step, rlhf_two_step, spac_practical, spac_theoretical,
                       spin_train)
from .optim import OptimizerConfig
from .preference import (PreferenceDataset, PreferenceRecord, bt_prob, read_jsonl,
                         sample_dataset, write_jsonl)

__version__ = "0.1.0"
