"""Supervised binary hash network (pairwise label objective)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, ValidationError
from .hashnet import SH, ForwardCache, NetConfig, NetParams, forward, init_params
from .itq import itq_encode, itq_train
from .lbfgs import LbfgsConfig
from .numerics import as_mat, frob_sq, sign
from .training import (PenaltyWeights, TraceRecord, backprop, code_penalties,
                       code_penalty_grad, record, wc_step, weight_decay, zeros_like)


@dataclass(frozen=True)
class ShHyperParams(PenaltyWeights):
    lambda1: float = 1e-3
    lambda2: float = 5.0
    lambda3: float = 1.0
    lambda4: float = 1e-4
    T: int = 5
    per_class_sample: float = 300   # math.inf keeps every sample

    def __post_init__(self):
        super().__post_init__()
        if not self.per_class_sample >= 1:
            raise ValidationError(f"per_class_sample must be at least 1, got {self.per_class_sample}")


def pairwise_label_matrix(labels) -> np.ndarray:
    """S_ij = +1 for same-class pairs and -1 otherwise (int8, m x m)."""
    labels = np.asarray(labels).reshape(-1)
    return np.where(labels[:, None] == labels[None, :], 1, -1).astype(np.int8)


def _check(config: NetConfig, x: np.ndarray, s: np.ndarray, b: np.ndarray) -> None:
    if config.mode != SH:
        raise ValidationError(f"expected an SH network, got mode {config.mode}")
    if x.shape[0] != config.input_dim:
        raise ShapeError(f"network expects {config.input_dim} features, data has {x.shape[0]}")
    m = x.shape[1]
    if s.shape != (m, m):
        raise ShapeError(f"label matrix has shape {s.shape}, expected {(m, m)}")
    if b.shape != (config.bits, m):
        raise ShapeError(f"codes have shape {b.shape}, expected {(config.bits, m)}")


def _similarity_residual(h: np.ndarray, s: np.ndarray) -> np.ndarray:
    # (1/L) H^T H - S; symmetric
    return h.T @ h / h.shape[0] - s


def sh_terms(params: NetParams, config: NetConfig, x: np.ndarray, s: np.ndarray, b: np.ndarray,
             hp: ShHyperParams, cache: ForwardCache | None = None) -> dict[str, float]:
    x = as_mat(x)
    b = np.asarray(b, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    _check(config, x, s, b)
    if cache is None:
        cache = forward(params, config, x)
    h = cache.h(config.code_layer)
    m = x.shape[1]
    terms = {"similarity": frob_sq(_similarity_residual(h, s)) / (2 * m),
             "weight_decay": weight_decay(params, hp.lambda1)}
    terms.update(code_penalties(h, b, hp))
    return terms


def sh_objective(params: NetParams, config: NetConfig, x: np.ndarray, s: np.ndarray,
                 b: np.ndarray, hp: ShHyperParams, cache: ForwardCache | None = None) -> float:
    return sum(sh_terms(params, config, x, s, b, hp, cache).values())


def sh_gradients(params: NetParams, config: NetConfig, x: np.ndarray, s: np.ndarray,
                 b: np.ndarray, hp: ShHyperParams, cache: ForwardCache | None = None) -> NetParams:
    x = as_mat(x)
    b = np.asarray(b, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    _check(config, x, s, b)
    if cache is None:
        cache = forward(params, config, x)
    top = config.code_layer
    h = cache.h(top)
    L, m = h.shape
    v = _similarity_residual(h, s)
    grad_h = h @ (v + v.T) / (m * L) + code_penalty_grad(h, b, hp)
    grads = zeros_like(params)
    backprop(params, config, cache, grad_h, top, hp.lambda1, grads)
    return grads


def value_and_grad(params, config, x, s, b, hp):
    cache = forward(params, config, x)
    terms = sh_terms(params, config, x, s, b, hp, cache)
    return sum(terms.values()), terms, sh_gradients(params, config, x, s, b, hp, cache)


def b_step_sign(cache: ForwardCache) -> np.ndarray:
    """Codes minimizing ||H - B||^2: the sign of the last layer, ties to +1."""
    return sign(cache.activations[-1])


def sample_per_class(labels, per_class: float, seed: int) -> np.ndarray:
    """Sorted indices of up to ``per_class`` samples from every class, without replacement."""
    labels = np.asarray(labels).reshape(-1)
    rng = np.random.default_rng(seed)
    picked = []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if math.isinf(per_class) or len(idx) <= per_class:
            picked.append(idx)
        else:
            picked.append(rng.choice(idx, size=int(per_class), replace=False))
    return np.sort(np.concatenate(picked))


def train_sh(x: np.ndarray, labels, config: NetConfig, hp: ShHyperParams = ShHyperParams(),
             lcfg: LbfgsConfig = LbfgsConfig(), seed: int = 0, itq_iters: int = 50, log=None):
    """Alternating optimization of the supervised objective.

    Returns ``(params, codes, trace, train_indices)``; ``codes`` belong to the
    sampled training subset ``x[:, train_indices]``.
    """
    x = as_mat(x)
    if config.mode != SH:
        raise ValidationError(f"train_sh needs an SH network, got mode {config.mode}")
    if labels is None:
        raise ValidationError("supervised training requires labels")
    labels = np.asarray(labels).reshape(-1)
    if labels.shape[0] != x.shape[1]:
        raise ValidationError(f"{labels.shape[0]} labels for {x.shape[1]} samples")
    if labels.size == 0:
        raise ValidationError("no training samples")
    idx = sample_per_class(labels, hp.per_class_sample, seed)
    xs = x[:, idx]
    s = pairwise_label_matrix(labels[idx]).astype(np.float64)
    if xs.shape[1] <= config.bits:
        raise ValidationError(f"need more than L={config.bits} training samples, got {xs.shape[1]}")
    b = itq_encode(itq_train(xs, config.bits, itq_iters, seed), xs)
    params = init_params(config, xs, seed)
    trace: list[TraceRecord] = []

    def fg(p):
        return value_and_grad(p, config, xs, s, b, hp)

    def step(t, name, cache=None, **info):
        terms = sh_terms(params, config, xs, s, b, hp, cache)
        record(trace, t, name, sum(terms.values()), terms, **info)
        if log is not None:
            log(trace[-1])

    step(0, "init")
    params, res = wc_step(fg, params, config, lcfg)
    step(0, "wc", lbfgs_status=res.status, lbfgs_iterations=res.iterations)
    for t in range(1, hp.T + 1):
        cache = forward(params, config, xs)
        b = b_step_sign(cache)
        step(t, "b", cache)
        params, res = wc_step(fg, params, config, lcfg)
        step(t, "wc", lbfgs_status=res.status, lbfgs_iterations=res.iterations)
    return params, b, trace, idx
