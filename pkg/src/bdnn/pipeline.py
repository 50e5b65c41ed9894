"""Desk-scale MNIST retrieval run comparing ITQ and UH-BDNN.

The database is a random subset of the MNIST training images and the
queries a random subset of the test images. Ground truth is the 50
Euclidean nearest database images of each query.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data_io import Dataset, load_idx
from .errors import ValidationError
from .evaluation import MetricReport, euclid_ground_truth, evaluate_codes
from .hamming import pack
from .hashnet import NetConfig, encode
from .itq import itq_encode, itq_train
from .lbfgs import LbfgsConfig
from .uh import UhHyperParams, train_uh

MNIST_ENV = "BDNN_MNIST_DIR"
DEFAULT_MNIST_DIR = "/root/data/mnist"
MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}
# hidden layer sizes per code length
MNIST_HIDDEN = {8: (90, 20), 16: (90, 30), 24: (100, 40), 32: (120, 50)}


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def mnist_dir(explicit=None) -> Path:
    return Path(explicit or os.environ.get(MNIST_ENV) or DEFAULT_MNIST_DIR)


def find_mnist(directory=None) -> dict[str, Path] | None:
    """Paths of the four idx files, or None if any is missing."""
    root = mnist_dir(directory)
    paths = {}
    for key, name in MNIST_FILES.items():
        for cand in (root / name, root / (name.replace("-idx", ".idx"))):
            if cand.is_file():
                paths[key] = cand
                break
        else:
            return None
    return paths


def load_mnist(directory=None, scale: bool = False) -> tuple[Dataset, Dataset]:
    paths = find_mnist(directory)
    if paths is None:
        raise ValidationError(f"MNIST idx files not found in {mnist_dir(directory)} "
                              f"(set {MNIST_ENV})")
    train = load_idx(paths["train_images"], paths["train_labels"], scale=scale)
    test = load_idx(paths["test_images"], paths["test_labels"], scale=scale)
    return train, test


@dataclass
class ReproConfig:
    data_dir: str | None = None
    db_size: int = 10_000
    query_size: int = 1_000
    k: int = 50
    bits: tuple[int, ...] = (16, 24)
    seed: int = 0
    scale: bool = True   # pixels / 255; ITQ and Euclidean ground truth are scale-invariant
    itq_iters: int = 50
    max_iters: int = 100
    T: int = 10
    hidden: dict = field(default_factory=lambda: dict(MNIST_HIDDEN))

    def record(self) -> dict:
        out = asdict(self)
        out["hidden"] = {str(k): list(v) for k, v in self.hidden.items()}
        out["bits"] = list(self.bits)
        out.pop("data_dir")
        return out


@dataclass
class ReproResult:
    reports: list[MetricReport]
    traces: dict[int, list]

    def map_of(self, method: str, bits: int) -> float:
        for r in self.reports:
            if r.method == method and r.bits == bits:
                return r.mean_ap
        raise KeyError((method, bits))


def subsample(train: Dataset, test: Dataset, cfg: ReproConfig) -> tuple[Dataset, Dataset]:
    rng = np.random.default_rng(cfg.seed)
    if cfg.db_size > len(train) or cfg.query_size > len(test):
        raise ValidationError(f"cannot draw {cfg.db_size}/{cfg.query_size} samples from "
                              f"{len(train)}/{len(test)}")
    db_idx = np.sort(rng.choice(len(train), cfg.db_size, replace=False))
    q_idx = np.sort(rng.choice(len(test), cfg.query_size, replace=False))
    return train.subset(db_idx), test.subset(q_idx)


def run_mnist_uh(cfg: ReproConfig = ReproConfig(), log=None) -> ReproResult:
    """Train ITQ and UH-BDNN at each code length and score both."""
    say = log or (lambda msg: None)
    train, test = load_mnist(cfg.data_dir, cfg.scale)
    db, q = subsample(train, test, cfg)
    gt = euclid_ground_truth(db.x, q.x, cfg.k)
    chash = config_hash(cfg.record())
    reports, traces = [], {}
    for bits in cfg.bits:
        start = time.perf_counter()
        itq = itq_train(db.x, bits, cfg.itq_iters, cfg.seed)
        m = evaluate_codes(pack(itq_encode(itq, db.x)), pack(itq_encode(itq, q.x)), gt)
        reports.append(MetricReport("mnist", "ITQ", bits, m.mean_ap, m.precision_at_radius,
                                    time.perf_counter() - start, cfg.seed, chash))
        say(reports[-1].to_record())

        start = time.perf_counter()
        if bits not in cfg.hidden:
            raise ValidationError(f"no hidden layer sizes configured for L={bits}")
        net = NetConfig.uh(db.dim, list(cfg.hidden[bits]), bits)
        hp = UhHyperParams(T=cfg.T)
        params, _, trace = train_uh(db.x, net, hp, LbfgsConfig(max_iters=cfg.max_iters),
                                    cfg.seed, cfg.itq_iters,
                                    log=lambda r: say(f"L={bits} " + r.to_json()))
        m = evaluate_codes(pack(encode(params, net, db.x)), pack(encode(params, net, q.x)), gt)
        reports.append(MetricReport("mnist", "UH-BDNN", bits, m.mean_ap, m.precision_at_radius,
                                    time.perf_counter() - start, cfg.seed, chash,
                                    {"trace_length": len(trace), "final_J": trace[-1].J}))
        traces[bits] = trace
        say(reports[-1].to_record())
    return ReproResult(reports, traces)
