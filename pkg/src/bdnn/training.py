"""Pieces shared by the unsupervised and supervised trainers.

Both objectives carry the same weight decay, binary-penalty, independence
and balance terms on the code layer; only the similarity term differs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import lbfgs
from .errors import NumericError, ValidationError
from .hashnet import ForwardCache, NetConfig, NetParams
from .numerics import activate_prime, frob_sq


@dataclass(frozen=True)
class PenaltyWeights:
    lambda1: float
    lambda2: float
    lambda3: float
    lambda4: float
    T: int

    def __post_init__(self):
        lams = (self.lambda1, self.lambda2, self.lambda3, self.lambda4)
        if any(not np.isfinite(v) or v < 0 for v in lams):
            raise ValidationError(f"penalty weights must be finite and non-negative, got {lams}")
        if self.T < 1:
            raise ValidationError(f"T must be at least 1, got {self.T}")


def code_penalties(h: np.ndarray, b: np.ndarray, hp: PenaltyWeights) -> dict[str, float]:
    """Binary, independence and balance terms evaluated on code-layer outputs ``h``."""
    L, m = h.shape
    gram = h @ h.T / m
    gram[np.diag_indices(L)] -= 1.0
    return {
        "binary": hp.lambda2 / (2 * m) * frob_sq(h - b),
        "independence": hp.lambda3 / 2 * frob_sq(gram),
        "balance": hp.lambda4 / (2 * m) * frob_sq(h.sum(axis=1)),
    }


def code_penalty_grad(h: np.ndarray, b: np.ndarray, hp: PenaltyWeights) -> np.ndarray:
    """Derivative of :func:`code_penalties` with respect to ``h``."""
    L, m = h.shape
    gram = h @ h.T / m
    gram[np.diag_indices(L)] -= 1.0
    out = hp.lambda2 / m * (h - b)
    out += 2 * hp.lambda3 / m * (gram @ h)
    # H 1_{m x m}: every column equals the row sums
    out += hp.lambda4 / m * h.sum(axis=1, keepdims=True)
    return out


def weight_decay(params: NetParams, lambda1: float) -> float:
    return lambda1 / 2 * sum(frob_sq(w) for w in params.weights)


def backprop(params: NetParams, config: NetConfig, cache: ForwardCache, grad_h_top: np.ndarray,
             top: int, lambda1: float, grads: NetParams) -> None:
    """Propagate ``dJ/dH^(top)`` down to layer 1, filling ``grads`` for weights below ``top``.

    ``grads`` entries for layers ``1..top-1`` are overwritten in place.
    """
    delta = grad_h_top * activate_prime(config.activations[top - 1], cache.z(top))
    for l in range(top - 1, 0, -1):
        w = params.weights[l - 1]
        grads.weights[l - 1] = delta @ cache.h(l).T + lambda1 * w
        grads.biases[l - 1] = delta.sum(axis=1)
        if l > 1:
            delta = (w.T @ delta) * activate_prime(config.activations[l - 1], cache.z(l))


def zeros_like(params: NetParams) -> NetParams:
    return NetParams([np.zeros_like(w) for w in params.weights],
                     [np.zeros_like(c) for c in params.biases])


ValueAndGrad = Callable[[NetParams], tuple[float, dict, NetParams]]


def wc_step(value_and_grad: ValueAndGrad, params: NetParams, config: NetConfig,
            lcfg: lbfgs.LbfgsConfig) -> tuple[NetParams, lbfgs.LbfgsResult]:
    """Minimize over all weights and biases with L-BFGS, starting from ``params``."""

    def fun(vec):
        p = NetParams.unflatten(vec, config)
        value, _, grads = value_and_grad(p)
        return value, grads.flatten()

    result = lbfgs.minimize(fun, params.flatten(), lcfg)
    return NetParams.unflatten(result.x, config), result


@dataclass
class TraceRecord:
    iteration: int
    step: str                  # "init", "wc" or "b"
    J: float
    terms: dict[str, float]
    info: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"iteration": self.iteration, "step": self.step, "J": self.J,
                           "terms": self.terms, **self.info}, sort_keys=True)


def write_trace(trace: list[TraceRecord], path) -> None:
    with open(path, "w") as fh:
        for rec in trace:
            fh.write(rec.to_json() + "\n")


def record(trace: list[TraceRecord], iteration: int, step: str, value: float, terms: dict,
           **info) -> None:
    if not np.isfinite(value):
        raise NumericError(f"objective became non-finite at iteration {iteration} ({step} step): "
                           f"terms={terms}")
    trace.append(TraceRecord(iteration, step, float(value), dict(terms), info))

