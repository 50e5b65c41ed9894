"""Limited-memory BFGS with an Armijo backtracking line search."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ValidationError

CONVERGED = "converged"
MAX_ITERS = "max_iters"
LINE_SEARCH_FAILED = "line_search_failed"
NON_FINITE = "non_finite"


@dataclass(frozen=True)
class LbfgsConfig:
    memory: int = 10
    max_iters: int = 100
    grad_tol: float = 1e-6
    c1: float = 1e-4
    shrink: float = 0.5
    max_trials: int = 40

    def __post_init__(self):
        if self.memory < 1:
            raise ValidationError("L-BFGS memory must be at least 1")
        if self.max_iters < 0:
            raise ValidationError("max_iters must be non-negative")
        if self.grad_tol <= 0 or self.c1 <= 0:
            raise ValidationError("tolerances must be positive")
        if not 0 < self.shrink < 1:
            raise ValidationError("shrink factor must lie in (0, 1)")
        if self.max_trials < 1:
            raise ValidationError("max_trials must be at least 1")


@dataclass
class LbfgsResult:
    x: np.ndarray
    value: float
    grad: np.ndarray
    status: str
    iterations: int
    evaluations: int


def two_loop(grad: np.ndarray, pairs) -> np.ndarray:
    """Return ``H_k grad`` for the inverse-Hessian approximation built from ``pairs``."""
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * np.dot(s, q)
        q -= a * y
        alphas.append(a)
    if pairs:
        s, y, _ = pairs[-1]
        q *= np.dot(s, y) / np.dot(y, y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return q


def _finite(value, grad) -> bool:
    return bool(np.isfinite(value)) and bool(np.isfinite(grad).all())


def minimize(fun: Callable[[np.ndarray], tuple[float, np.ndarray]], x0: np.ndarray,
             config: LbfgsConfig = LbfgsConfig()) -> LbfgsResult:
    """Minimize ``fun`` (returning value and gradient) starting from ``x0``.

    Accepted steps always satisfy the Armijo sufficient-decrease condition,
    so the returned value never exceeds ``fun(x0)``.
    """
    x = np.array(x0, dtype=np.float64)
    f, g = fun(x)
    f = float(f)
    g = np.asarray(g, dtype=np.float64)
    evals = 1
    if not _finite(f, g):
        return LbfgsResult(x, f, g, NON_FINITE, 0, evals)
    pairs: deque = deque(maxlen=config.memory)
    it = 0
    status = MAX_ITERS
    while True:
        if np.max(np.abs(g), initial=0.0) <= config.grad_tol:
            status = CONVERGED
            break
        if it >= config.max_iters:
            status = MAX_ITERS
            break
        d = -two_loop(g, pairs)
        slope = float(np.dot(g, d))
        if not slope < 0:
            # curvature information went bad; restart from steepest descent
            pairs.clear()
            d = -g
            slope = -float(np.dot(g, g))
        # first iteration has no curvature scale: keep the step length ~1/|g|
        step = 1.0 if pairs else min(1.0, 1.0 / np.linalg.norm(g))
        accepted = False
        hit_non_finite = False
        for _ in range(config.max_trials):
            x_new = x + step * d
            f_new, g_new = fun(x_new)
            evals += 1
            f_new = float(f_new)
            g_new = np.asarray(g_new, dtype=np.float64)
            if _finite(f_new, g_new):
                if f_new <= f + config.c1 * step * slope:
                    accepted = True
                    break
            else:
                hit_non_finite = True
            step *= config.shrink
        if not accepted:
            status = NON_FINITE if hit_non_finite else LINE_SEARCH_FAILED
            break
        s = x_new - x
        y = g_new - g
        sy = float(np.dot(s, y))
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / sy))
        x, f, g = x_new, f_new, g_new
        it += 1
    return LbfgsResult(x, f, g, status, it, evals)
