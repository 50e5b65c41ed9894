"""Unsupervised binary hash network (reconstruction objective).

The network reconstructs its input at the last layer from the binary codes
of layer n-1. Training alternates between an L-BFGS step on all weights
and biases with the codes fixed, and a discrete coordinate-descent step on
the codes with the network fixed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, ValidationError
from .hashnet import UH, ForwardCache, NetConfig, NetParams, forward, init_params
from .itq import itq_encode, itq_train
from .lbfgs import LbfgsConfig
from .numerics import as_mat, frob_sq, sign
from .training import (PenaltyWeights, TraceRecord, backprop, code_penalties,
                       code_penalty_grad, record, wc_step, weight_decay, zeros_like)

MAX_SWEEPS = 10


@dataclass(frozen=True)
class UhHyperParams(PenaltyWeights):
    lambda1: float = 1e-5
    lambda2: float = 5e-2
    lambda3: float = 1e-2
    lambda4: float = 1e-6
    T: int = 10


def _check(config: NetConfig, x: np.ndarray, b: np.ndarray) -> None:
    if config.mode != UH:
        raise ValidationError(f"expected a UH network, got mode {config.mode}")
    if x.shape[0] != config.input_dim:
        raise ShapeError(f"network expects {config.input_dim} features, data has {x.shape[0]}")
    if b.shape != (config.bits, x.shape[1]):
        raise ShapeError(f"codes have shape {b.shape}, expected {(config.bits, x.shape[1])}")


def _residual(params: NetParams, x: np.ndarray, b: np.ndarray) -> np.ndarray:
    # X - W^(n-1) B - c^(n-1) 1
    return x - params.weights[-1] @ b - params.biases[-1][:, None]


def uh_terms(params: NetParams, config: NetConfig, x: np.ndarray, b: np.ndarray,
             hp: UhHyperParams, cache: ForwardCache | None = None,
             r: np.ndarray | None = None) -> dict[str, float]:
    """The five objective terms, keyed by name."""
    x = as_mat(x)
    b = np.asarray(b, dtype=np.float64)
    _check(config, x, b)
    if cache is None:
        cache = forward(params, config, x)
    m = x.shape[1]
    if r is None:
        r = _residual(params, x, b)
    terms = {"reconstruction": frob_sq(r) / (2 * m),
             "weight_decay": weight_decay(params, hp.lambda1)}
    terms.update(code_penalties(cache.h(config.code_layer), b, hp))
    return terms


def uh_objective(params: NetParams, config: NetConfig, x: np.ndarray, b: np.ndarray,
                 hp: UhHyperParams, cache: ForwardCache | None = None) -> float:
    return sum(uh_terms(params, config, x, b, hp, cache).values())


def uh_gradients(params: NetParams, config: NetConfig, x: np.ndarray, b: np.ndarray,
                 hp: UhHyperParams, cache: ForwardCache | None = None,
                 r: np.ndarray | None = None) -> NetParams:
    x = as_mat(x)
    b = np.asarray(b, dtype=np.float64)
    _check(config, x, b)
    if cache is None:
        cache = forward(params, config, x)
    m = x.shape[1]
    grads = zeros_like(params)
    if r is None:
        r = _residual(params, x, b)
    grads.weights[-1] = -(r @ b.T) / m + hp.lambda1 * params.weights[-1]
    grads.biases[-1] = -r.sum(axis=1) / m
    top = config.code_layer
    backprop(params, config, cache, code_penalty_grad(cache.h(top), b, hp), top, hp.lambda1, grads)
    return grads


def value_and_grad(params: NetParams, config: NetConfig, x: np.ndarray, b: np.ndarray,
                   hp: UhHyperParams) -> tuple[float, dict[str, float], NetParams]:
    x = as_mat(x)
    b = np.asarray(b, dtype=np.float64)
    cache = forward(params, config, x)
    r = _residual(params, x, b)
    terms = uh_terms(params, config, x, b, hp, cache, r)
    return sum(terms.values()), terms, uh_gradients(params, config, x, b, hp, cache, r)


def restricted_objective(params: NetParams, x: np.ndarray, h_code: np.ndarray,
                         b: np.ndarray, lambda2: float) -> float:
    """``||X - W B - c 1||^2 + lambda2 ||H - B||^2``: the part of J that depends on B."""
    b = np.asarray(b, dtype=np.float64)
    return frob_sq(_residual(params, x, b)) + lambda2 * frob_sq(h_code - b)


def b_step(params: NetParams, cache: ForwardCache, x: np.ndarray, hp: UhHyperParams,
           b0: np.ndarray | None = None, max_sweeps: int = MAX_SWEEPS) -> np.ndarray:
    """Discrete cyclic coordinate descent over the rows of B.

    Each row has a closed-form optimum given the others; rows are swept in
    order until a full sweep changes nothing or ``max_sweeps`` is reached.
    Starts from ``b0`` when given (the trainer passes the current codes),
    otherwise from the sign of the code-layer outputs.
    """
    x = as_mat(x)
    h = cache.activations[-2]
    w = params.weights[-1]
    L = w.shape[1]
    if h.shape != (L, x.shape[1]):
        raise ShapeError(f"code layer output {h.shape} does not match {L} bits x {x.shape[1]} samples")
    v = x - params.biases[-1][:, None]
    q = w.T @ v + hp.lambda2 * h
    gram = w.T @ w
    b = sign(h) if b0 is None else np.array(b0, dtype=np.int8)
    if b.shape != h.shape:
        raise ShapeError(f"initial codes {b.shape} do not match {h.shape}")
    bf = b.astype(np.float64)
    for _ in range(max_sweeps):
        changed = False
        for k in range(L):
            # q_k^T - w_k^T W_1 B_1 with row k left out of the product
            target = q[k] - gram[k] @ bf + gram[k, k] * bf[k]
            row = np.where(target >= 0, 1.0, -1.0)
            if not np.array_equal(row, bf[k]):
                bf[k] = row
                changed = True
        if not changed:
            break
    return bf.astype(np.int8)


def train_uh(x: np.ndarray, config: NetConfig, hp: UhHyperParams = UhHyperParams(),
             lcfg: LbfgsConfig = LbfgsConfig(), seed: int = 0, itq_iters: int = 50,
             log=None) -> tuple[NetParams, np.ndarray, list[TraceRecord]]:
    """Alternating optimization of the unsupervised objective.

    Codes start from ITQ, weights from layer-wise PCA; one warm-up weight
    step is followed by ``hp.T`` rounds of (code step, weight step), each
    weight step warm-started from the previous weights. The trace has one
    record per half-step.
    """
    x = as_mat(x)
    if config.mode != UH:
        raise ValidationError(f"train_uh needs a UH network, got mode {config.mode}")
    if x.shape[1] < config.bits:
        raise ValidationError(f"need at least L={config.bits} samples, got {x.shape[1]}")
    b = itq_encode(itq_train(x, config.bits, itq_iters, seed), x)
    params = init_params(config, x, seed)
    trace: list[TraceRecord] = []

    def fg(p):
        return value_and_grad(p, config, x, b, hp)

    def log_last():
        if log is not None:
            log(trace[-1])

    record(trace, 0, "init", *_value_terms(params, config, x, b, hp))
    log_last()
    params, res = wc_step(fg, params, config, lcfg)
    record(trace, 0, "wc", *_value_terms(params, config, x, b, hp),
           lbfgs_status=res.status, lbfgs_iterations=res.iterations)
    log_last()
    for t in range(1, hp.T + 1):
        cache = forward(params, config, x)
        b = b_step(params, cache, x, hp, b0=b)
        record(trace, t, "b", *_value_terms(params, config, x, b, hp, cache))
        log_last()
        params, res = wc_step(fg, params, config, lcfg)
        record(trace, t, "wc", *_value_terms(params, config, x, b, hp),
               lbfgs_status=res.status, lbfgs_iterations=res.iterations)
        log_last()
    return params, b, trace


def _value_terms(params, config, x, b, hp, cache=None):
    terms = uh_terms(params, config, x, b, hp, cache)
    return sum(terms.values()), terms
