"""Scalar losses and their analytic gradients.

Every policy loss here is written in terms of the within-state log-ratio
``l = log pi - log pi_t`` so that per-state normalisers (the log-partition of
the implicit reward, or a constant added to a row of logits) cancel.
Gradients are returned with respect to the candidate policy's logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bandit import SoftmaxPolicy, as_table
from .errors import DomainError
from .preference import PreferenceDataset, log_sigmoid, sigmoid

COMPARISONS = ("chosen", "rejected", "average")
_WEIGHTS = {"chosen": (1.0, 0.0), "rejected": (0.0, 1.0), "average": (0.5, 0.5)}


@dataclass(frozen=True)
class LossValue:
    value: float
    gradient: np.ndarray


def _require_data(D: PreferenceDataset) -> None:
    if len(D) == 0:
        raise DomainError("the preference dataset is empty")


def _comparison_weights(comparison: str) -> tuple[float, float]:
    try:
        return _WEIGHTS[comparison]
    except KeyError:
        raise DomainError(f"comparison must be one of {COMPARISONS}, got {comparison!r}") from None


def _acc(S: int, A: int, xs, ys, w) -> np.ndarray:
    return np.bincount(xs * A + ys, weights=w, minlength=S * A).reshape(S, A)


def _softmax_backward(pi: SoftmaxPolicy, g_logp: np.ndarray) -> np.ndarray:
    # d log softmax(theta)[x, y] / d theta[x, y'] = 1{y = y'} - pi(y'|x)
    return g_logp - pi.table() * g_logp.sum(axis=1, keepdims=True)


def _safe_log(pi, what: str, referenced: np.ndarray) -> np.ndarray:
    if isinstance(pi, SoftmaxPolicy):
        return pi.log_table()
    p = as_table(pi)
    with np.errstate(divide="ignore"):
        logp = np.log(p)
    if np.any(referenced & ~np.isfinite(logp)):
        raise DomainError(f"{what} assigns zero probability to a referenced response")
    return np.where(np.isfinite(logp), logp, 0.0)


def _pair_mask(D: PreferenceDataset) -> np.ndarray:
    W = D.pair_counts
    return (W.sum(axis=2) + W.sum(axis=1)) > 0


# ---------------------------------------------------------------- reward losses

def nll_grad(f, D: PreferenceDataset) -> LossValue:
    """Negative log-likelihood of reward table ``f`` and its gradient in ``f``."""
    _require_data(D)
    f = np.asarray(f, dtype=float)
    tx, ta, tb, tw = D.triples
    z = f[tx, ta] - f[tx, tb]
    value = -float(tw @ log_sigmoid(z)) / D.n
    c = -tw * sigmoid(-z) / D.n
    S, A = f.shape
    grad = _acc(S, A, tx, ta, c) - _acc(S, A, tx, tb, c)
    return LossValue(value, grad)


def nll_ED(f, D: PreferenceDataset) -> float:
    return nll_grad(f, D).value


def duel_LD_sampled(f, ys, yps, xs) -> float:
    f = np.asarray(f, dtype=float)
    xs, ys, yps = (np.asarray(a, dtype=np.int64) for a in (xs, ys, yps))
    if not (len(xs) == len(ys) == len(yps)):
        raise DomainError("xs, ys and yps must have equal lengths")
    if len(xs) == 0:
        raise DomainError("no samples")
    return float(np.mean(f[xs, ys] - f[xs, yps]))


def duel_LD_weights(pi, D: PreferenceDataset, comparison: str = "average") -> np.ndarray:
    """Coefficient table K with duel_LD_exact(f) = sum(K * f)."""
    _require_data(D)
    _comparison_weights(comparison)
    P = D.prompt_counts[:, None] * as_table(pi)
    return (P - D.comparison_counts(comparison)) / D.n


def duel_LD_exact(f, pi, D: PreferenceDataset, comparison: str = "average") -> float:
    return float(np.sum(duel_LD_weights(pi, D, comparison) * np.asarray(f, dtype=float)))


def critic_objective(f, pi_t, D: PreferenceDataset, lam: float,
                     comparison: str = "average") -> LossValue:
    """L_D(f, pi_t) + lam * E_D(f) with the pi_t-expectation taken exactly."""
    K = duel_LD_weights(pi_t, D, comparison)
    nll = nll_grad(f, D)
    return LossValue(float(np.sum(K * f)) + lam * nll.value, K + lam * nll.gradient)


# ---------------------------------------------------------------- policy losses

def dpo_loss(pi: SoftmaxPolicy, pi_ref, D: PreferenceDataset, alpha: float) -> LossValue:
    """-(1/n) sum log sigma(alpha * [log-ratio(y_w) - log-ratio(y_l)]), ratios against pi_ref."""
    _require_data(D)
    if alpha < 0:
        raise DomainError("alpha must be non-negative")
    pi = SoftmaxPolicy.from_policy(pi)
    ratio = pi.log_table() - _safe_log(pi_ref, "reference policy", _pair_mask(D))
    inner = nll_grad(alpha * ratio, D)
    return LossValue(inner.value, _softmax_backward(pi, alpha * inner.gradient))


def _first_term_weights(pi_t_table: np.ndarray, D: PreferenceDataset, ys) -> np.ndarray:
    if ys is None:
        return D.prompt_counts[:, None] * pi_t_table
    ys = np.asarray(ys, dtype=np.int64)
    if ys.shape != D.x.shape:
        raise DomainError("need exactly one sampled response per record")
    S, A = pi_t_table.shape
    return _acc(S, A, D.x, ys, np.ones(len(ys)))


def _setup(pi, pi_t, D, ys, eta, lam):
    _require_data(D)
    if not eta > 0:
        raise DomainError("eta must be positive")
    if lam < 0:
        raise DomainError("lambda must be non-negative")
    pi = SoftmaxPolicy.from_policy(pi)
    P = _first_term_weights(as_table(pi_t), D, ys)
    ratio = pi.log_table() - _safe_log(pi_t, "frozen policy pi_t", _pair_mask(D) | (P > 0))
    return pi, P, ratio


def spac_objective(pi: SoftmaxPolicy, pi_t, D: PreferenceDataset, ys=None,
                   comparison: str = "average", eta: float = 0.1, lam: float = 1.0) -> LossValue:
    """Policy objective of the practical self-play update.

    First term: eta-scaled gap between the log-ratio of the self-generated
    response and that of the comparison response (``ys=None`` takes the exact
    expectation over y ~ pi_t). Second term: lam times the preference NLL of
    the implicit reward eta * log(pi / pi_t).
    """
    _comparison_weights(comparison)
    pi, P, ratio = _setup(pi, pi_t, D, ys, eta, lam)
    K = (P - D.comparison_counts(comparison)) / D.n
    first = eta * float(np.sum(K * ratio))
    g = eta * K
    value = first
    if lam > 0:
        nll = nll_grad(eta * ratio, D)
        value += lam * nll.value
        g = g + lam * eta * nll.gradient
    return LossValue(value, _softmax_backward(pi, g))


def spac_first_term(pi, pi_t, D: PreferenceDataset, ys=None, comparison: str = "average",
                    eta: float = 0.1) -> float:
    return spac_objective(pi, pi_t, D, ys, comparison, eta, lam=0.0).value


def _smoothed_entries(pi_t_table, D: PreferenceDataset, ys):
    """Flattened (x, y_w, y_l, y, weight) entries of the smoothed first term."""
    if ys is None:
        tx, ta, tb, tw = D.triples
        A = pi_t_table.shape[1]
        qy = np.tile(np.arange(A), len(tx))
        rep = lambda a: np.repeat(a, A)  # noqa: E731
        qx, qa, qb = rep(tx), rep(ta), rep(tb)
        qw = rep(tw) * pi_t_table[qx, qy]
        keep = qw > 0
        return qx[keep], qa[keep], qb[keep], qy[keep], qw[keep]
    ys = np.asarray(ys, dtype=np.int64)
    if ys.shape != D.x.shape:
        raise DomainError("need exactly one sampled response per record")
    S, A = D.num_states, D.num_actions
    key = ((D.x * A + D.y_w) * A + D.y_l) * A + ys
    uniq, counts = np.unique(key, return_counts=True)
    qy = uniq % A
    rest = uniq // A
    qb = rest % A
    rest //= A
    qa = rest % A
    qx = rest // A
    return qx, qa, qb, qy, counts.astype(float)


def spac_objective_smoothed(pi: SoftmaxPolicy, pi_t, D: PreferenceDataset, ys=None,
                            comparison: str = "average", eta: float = 0.1,
                            lam: float = 1.0) -> LossValue:
    """Log-sigmoid smoothed variant: the first term becomes
    -(1/n) sum log sigma(eta * ratio(y') - eta * ratio(y)).

    With ``comparison='average'`` ratio(y') is the mean of the chosen and
    rejected log-ratios; ``ys=None`` averages exactly over y ~ pi_t.
    """
    cw, cl = _comparison_weights(comparison)
    pi, _, ratio = _setup(pi, pi_t, D, None if ys is None else ys, eta, lam)
    S, A = ratio.shape
    qx, qa, qb, qy, qw = _smoothed_entries(as_table(pi_t), D, ys)
    lbar = cw * ratio[qx, qa] + cl * ratio[qx, qb]
    z = eta * (lbar - ratio[qx, qy])
    value = -float(qw @ log_sigmoid(z)) / D.n
    c = -qw * sigmoid(-z) / D.n  # d value / d z
    g = eta * (cw * _acc(S, A, qx, qa, c) + cl * _acc(S, A, qx, qb, c) - _acc(S, A, qx, qy, c))
    if lam > 0:
        nll = nll_grad(eta * ratio, D)
        value += lam * nll.value
        g = g + lam * eta * nll.gradient
    return LossValue(value, _softmax_backward(pi, g))
