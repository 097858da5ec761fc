"""Inner solvers: scipy's L-BFGS-B (default) or full-batch projected gradient
descent with step halving. Both work on (value, gradient) callables over
arbitrary-shaped arrays and optionally a symmetric box [-bound, bound]."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from .errors import DivergedError

METHODS = ("lbfgs", "gd")


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "lbfgs"
    step_size: float = 1.0  # gd only
    max_steps: int = 500
    grad_tol: float = 1e-8
    # multiplicative step growth after an accepted gd step; 1.0 gives plain GD
    growth: float = 1.5
    min_step: float = 1e-18

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"optimizer method must be one of {METHODS}")


@dataclass
class OptimResult:
    x: np.ndarray
    value: float
    grad_norm: float
    steps: int
    trace: list = field(default_factory=list)


def _box(bound):
    if bound is None or math.isinf(bound):
        return None
    return lambda z: np.clip(z, -bound, bound)


def minimize(fun: Callable[[np.ndarray], tuple], x0: np.ndarray, cfg: OptimizerConfig,
             bound: Optional[float] = None, iteration: int = 0,
             keep_trace: bool = False) -> OptimResult:
    """Minimise ``fun`` (returning ``(value, gradient)``) from ``x0``.

    ``bound`` restricts every coordinate to [-bound, bound]. The stopping rule
    is on the projected gradient. A non-finite loss raises DivergedError.
    """
    if cfg.method == "gd":
        return _gd(fun, x0, cfg, _box(bound), iteration, keep_trace)
    return _lbfgs(fun, x0, cfg, bound, iteration, keep_trace)


def _projected_norm(x, g, proj) -> float:
    if proj is None:
        return float(np.linalg.norm(g))
    return float(np.linalg.norm(x - proj(x - g)))


def _lbfgs(fun, x0, cfg, bound, iteration, keep_trace) -> OptimResult:
    shape = np.shape(x0)
    proj = _box(bound)
    x0 = np.array(x0, dtype=float)
    if proj is not None:
        x0 = proj(x0)
    calls = [0]

    def f(z):
        calls[0] += 1
        v, g = fun(z.reshape(shape))
        if not np.isfinite(v):
            raise DivergedError(iteration, calls[0], v)
        return float(v), np.asarray(g, dtype=float).ravel()

    v0, _ = f(x0.ravel())
    trace = [v0] if keep_trace else []
    cb = (lambda xk: trace.append(f(xk)[0])) if keep_trace else None
    bounds = None if proj is None else [(-bound, bound)] * x0.size
    res = _scipy_minimize(f, x0.ravel(), jac=True, method="L-BFGS-B", bounds=bounds,
                          callback=cb,
                          options={"maxiter": cfg.max_steps, "gtol": cfg.grad_tol,
                                   "ftol": 0.0, "maxcor": 20})
    x = res.x.reshape(shape)
    v, g = fun(x)
    return OptimResult(x, float(v), _projected_norm(x, np.asarray(g), proj), int(res.nit), trace)


def _gd(fun, x0, cfg, proj, iteration, keep_trace) -> OptimResult:
    p = proj or (lambda z: z)
    x = p(np.array(x0, dtype=float))
    v, g = fun(x)
    if not np.isfinite(v):
        raise DivergedError(iteration, 0, v)
    step = cfg.step_size
    trace = [v] if keep_trace else []
    k = 0
    gn = _projected_norm(x, g, proj)
    while k < cfg.max_steps and gn > cfg.grad_tol:
        k += 1
        while True:
            x_new = p(x - step * g)
            v_new, g_new = fun(x_new)
            if not np.isfinite(v_new):
                if step <= cfg.min_step:
                    raise DivergedError(iteration, k, v_new)
                step *= 0.5
                continue
            if v_new <= v or step <= cfg.min_step:
                break
            step *= 0.5
        if v_new > v:
            break  # no descent possible at machine precision
        x, v, g = x_new, v_new, g_new
        gn = _projected_norm(x, g, proj)
        step *= cfg.growth
        if keep_trace:
            trace.append(v)
    return OptimResult(x, float(v), gn, k, trace)
