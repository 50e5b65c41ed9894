"""The feed-forward hash network: configuration, parameters, forward pass.

Layers are numbered 1..n as in the usual notation; ``weights[l-1]`` maps
layer ``l`` to layer ``l+1``. Data matrices hold one sample per column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, ValidationError
from .itq import top_eigenvectors
from .numerics import IDENTITY, SIGMOID, activate, add_col, as_mat, sign

UH = "UH"
SH = "SH"


@dataclass(frozen=True)
class NetConfig:
    layer_sizes: tuple[int, ...]
    activations: tuple[str, ...]   # one tag per layer, activations[0] is the input layer
    code_layer: int                # 1-based index of the binarized layer
    mode: str

    def __post_init__(self):
        n = len(self.layer_sizes)
        if n < 2:
            raise ValidationError("a network needs at least an input and an output layer")
        if len(self.activations) != n:
            raise ValidationError(f"{n} layers but {len(self.activations)} activation tags")
        if any(s < 1 for s in self.layer_sizes):
            raise ValidationError(f"layer sizes must be positive: {self.layer_sizes}")
        if not 2 <= self.code_layer <= n:
            raise ValidationError(f"code layer {self.code_layer} outside 2..{n}")
        if self.mode == UH:
            if n < 3 or self.code_layer != n - 1:
                raise ValidationError("UH networks binarize layer n-1 and need n >= 3")
            if self.layer_sizes[-1] != self.layer_sizes[0]:
                raise ValidationError("UH output layer must reconstruct the input dimension")
            want = (IDENTITY,) + (SIGMOID,) * (n - 3) + (IDENTITY, IDENTITY)
        elif self.mode == SH:
            if self.code_layer != n:
                raise ValidationError("SH networks binarize the last layer")
            want = (IDENTITY,) + (SIGMOID,) * (n - 2) + (IDENTITY,)
        else:
            raise ValidationError(f"unknown mode {self.mode!r}")
        if tuple(self.activations) != want:
            raise ValidationError(f"{self.mode} activations must be {want}, got {self.activations}")

    @property
    def n(self) -> int:
        return len(self.layer_sizes)

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def bits(self) -> int:
        return self.layer_sizes[self.code_layer - 1]

    @classmethod
    def uh(cls, dim: int, hidden: tuple[int, ...] | list[int], bits: int) -> NetConfig:
        """UH network ``dim -> hidden... -> bits -> dim``."""
        sizes = (dim, *hidden, bits, dim)
        acts = (IDENTITY,) + (SIGMOID,) * len(hidden) + (IDENTITY, IDENTITY)
        return cls(tuple(sizes), acts, len(sizes) - 1, UH)

    @classmethod
    def sh(cls, dim: int, hidden: tuple[int, ...] | list[int], bits: int) -> NetConfig:
        """SH network ``dim -> hidden... -> bits``."""
        sizes = (dim, *hidden, bits)
        acts = (IDENTITY,) + (SIGMOID,) * len(hidden) + (IDENTITY,)
        return cls(tuple(sizes), acts, len(sizes), SH)


@dataclass
class NetParams:
    weights: list[np.ndarray]   # weights[i] has shape (s_{i+2}, s_{i+1})
    biases: list[np.ndarray]    # biases[i] has shape (s_{i+2},)

    def check(self, config: NetConfig) -> None:
        if len(self.weights) != config.n - 1 or len(self.biases) != config.n - 1:
            raise ShapeError(f"expected {config.n - 1} layers of parameters, got {len(self.weights)}")
        for i, (w, c) in enumerate(zip(self.weights, self.biases)):
            want = (config.layer_sizes[i + 1], config.layer_sizes[i])
            if w.shape != want or c.shape != (want[0],):
                raise ShapeError(f"layer {i + 1}: W{w.shape} c{c.shape}, expected W{want} c{(want[0],)}")

    def copy(self) -> NetParams:
        return NetParams([w.copy() for w in self.weights], [c.copy() for c in self.biases])

    def flatten(self) -> np.ndarray:
        """Layer-major, W (row-major) before c within each layer."""
        parts = []
        for w, c in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(c.ravel())
        return np.concatenate(parts)

    @classmethod
    def unflatten(cls, vec: np.ndarray, config: NetConfig) -> NetParams:
        weights, biases = [], []
        pos = 0
        for i in range(config.n - 1):
            rows, cols = config.layer_sizes[i + 1], config.layer_sizes[i]
            weights.append(vec[pos:pos + rows * cols].reshape(rows, cols).copy())
            pos += rows * cols
            biases.append(vec[pos:pos + rows].copy())
            pos += rows
        if pos != vec.size:
            raise ShapeError(f"parameter vector has {vec.size} entries, config needs {pos}")
        return cls(weights, biases)


@dataclass
class ForwardCache:
    pre_activations: list[np.ndarray | None]   # index l-1 holds Z^(l); entry 0 is None
    activations: list[np.ndarray]              # index l-1 holds H^(l); entry 0 is X

    def z(self, layer: int) -> np.ndarray:
        return self.pre_activations[layer - 1]

    def h(self, layer: int) -> np.ndarray:
        return self.activations[layer - 1]


def forward(params: NetParams, config: NetConfig, x: np.ndarray) -> ForwardCache:
    x = as_mat(x)
    if x.shape[0] != config.input_dim:
        raise ShapeError(f"network expects {config.input_dim} features, data has {x.shape[0]}")
    params.check(config)
    zs: list[np.ndarray | None] = [None]
    hs = [x]
    for i, (w, c) in enumerate(zip(params.weights, params.biases)):
        z = add_col(w @ hs[-1], c)
        zs.append(z)
        hs.append(activate(config.activations[i + 1], z))
    return ForwardCache(zs, hs)


def code_activations(params: NetParams, config: NetConfig, x: np.ndarray) -> np.ndarray:
    """Real-valued outputs of the code layer (no binarization)."""
    x = as_mat(x)
    if x.shape[0] != config.input_dim:
        raise ShapeError(f"network expects {config.input_dim} features, data has {x.shape[0]}")
    params.check(config)
    h = x
    for i in range(config.code_layer - 1):
        h = activate(config.activations[i + 1], add_col(params.weights[i] @ h, params.biases[i]))
    return h


def encode(params: NetParams, config: NetConfig, x: np.ndarray) -> np.ndarray:
    """Binary codes (L x m, int8 in {-1,+1}) from the code layer."""
    return sign(code_activations(params, config, x))


def init_params(config: NetConfig, x: np.ndarray, seed: int = 0) -> NetParams:
    """Layer-wise PCA initialization with zero biases.

    Each weight matrix takes as rows the top covariance eigenvectors of the
    previous layer's activations, which are propagated forward as the layers
    are built. In UH mode the reconstruction layer starts as the D x L
    rectangular identity instead.
    """
    x = as_mat(x)
    if x.shape[0] != config.input_dim:
        raise ShapeError(f"network expects {config.input_dim} features, data has {x.shape[0]}")
    rng = np.random.default_rng(seed)
    sizes = config.layer_sizes
    eig_layers = config.n - 2 if config.mode == UH else config.n - 1
    weights, biases = [], []
    h = x
    for i in range(eig_layers):
        w = top_eigenvectors(h, sizes[i + 1], rng).T
        weights.append(w)
        biases.append(np.zeros(sizes[i + 1]))
        h = activate(config.activations[i + 1], w @ h)
    if config.mode == UH:
        weights.append(np.eye(sizes[-1], sizes[-2]))
        biases.append(np.zeros(sizes[-1]))
    return NetParams(weights, biases)
