"""Oracles and generators shared by the test modules."""

import numpy as np

from bdnn.hashnet import NetParams


def central_difference(fun, vec, h=1e-6):
    out = np.zeros_like(vec)
    for i in range(vec.size):
        e = np.zeros_like(vec)
        e[i] = h
        out[i] = (fun(vec + e) - fun(vec - e)) / (2 * h)
    return out


def max_relative_error(analytic, numeric, floor=1e-8):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def random_params(config, rng, scale=0.5):
    s = config.layer_sizes
    return NetParams([scale * rng.standard_normal((s[i + 1], s[i])) for i in range(config.n - 1)],
                     [scale * rng.standard_normal(s[i + 1]) for i in range(config.n - 1)])


def random_codes(rng, bits, m):
    return np.where(rng.standard_normal((bits, m)) >= 0, 1, -1).astype(np.int8)


# Extended-precision reference objectives. Central differences of a float64
# objective lose about eps*|J|/h to cancellation, which swamps gradient
# components near 1e-5 at h=1e-6; evaluating in long double removes that.

LD = np.longdouble


def _ld_forward(vec, config, x):
    s = config.layer_sizes
    h = np.asarray(x, dtype=LD)
    outs, pos = [h], 0
    for i in range(config.n - 1):
        w = vec[pos:pos + s[i + 1] * s[i]].reshape(s[i + 1], s[i])
        pos += w.size
        c = vec[pos:pos + s[i + 1]]
        pos += s[i + 1]
        z = w @ h + c[:, None]
        h = 1 / (1 + np.exp(-z)) if config.activations[i + 1] == "sigmoid" else z
        outs.append(h)
    return outs, vec


def _ld_weights(vec, config):
    s = config.layer_sizes
    pos, total = 0, LD(0)
    for i in range(config.n - 1):
        w = vec[pos:pos + s[i + 1] * s[i]]
        total += (w * w).sum()
        pos += w.size + s[i + 1]
    return total


def _ld_penalties(h, b, lam):
    _, l2, l3, l4 = (LD(v) for v in lam)
    L, m = h.shape
    gram = h @ h.T / m - np.eye(L, dtype=LD)
    return (l2 / (2 * m) * ((h - b) ** 2).sum() + l3 / 2 * (gram ** 2).sum()
            + l4 / (2 * m) * (h.sum(axis=1) ** 2).sum())


def uh_objective_ld(vec, config, x, b, lam):
    outs, _ = _ld_forward(vec, config, x)
    b = np.asarray(b, dtype=LD)
    m = b.shape[1]
    s = config.layer_sizes
    w_last = vec[-(s[-1] * s[-2] + s[-1]):-s[-1]].reshape(s[-1], s[-2])
    c_last = vec[-s[-1]:]
    recon = np.asarray(x, dtype=LD) - w_last @ b - c_last[:, None]
    return ((recon ** 2).sum() / (2 * m) + LD(lam[0]) / 2 * _ld_weights(vec, config)
            + _ld_penalties(outs[-2], b, lam))


def sh_objective_ld(vec, config, x, s, b, lam):
    outs, _ = _ld_forward(vec, config, x)
    h = outs[-1]
    L, m = h.shape
    resid = h.T @ h / L - np.asarray(s, dtype=LD)
    return ((resid ** 2).sum() / (2 * m) + LD(lam[0]) / 2 * _ld_weights(vec, config)
            + _ld_penalties(h, np.asarray(b, dtype=LD), lam))


def central_difference_ld(fun, vec, h=1e-6):
    vec = np.asarray(vec, dtype=LD)
    h = LD(h)
    out = np.zeros(vec.size)
    for i in range(vec.size):
        e = np.zeros_like(vec)
        e[i] = h
        out[i] = float((fun(vec + e) - fun(vec - e)) / (2 * h))
    return out
