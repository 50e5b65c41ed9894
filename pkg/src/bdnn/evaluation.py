"""Ground truth construction and retrieval metrics (mAP, precision within a radius).

Hamming ties are ranked by ascending database index. That convention is
part of the metric: AP under ties is otherwise ambiguous.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ShapeError, ValidationError
from .hamming import PackedCodes, distances, rank
from .numerics import as_mat


@dataclass
class GroundTruth:
    relevant: list[np.ndarray]   # per query, sorted unique database indices
    db_size: int

    def __post_init__(self):
        for i, r in enumerate(self.relevant):
            if r.size and (r.min() < 0 or r.max() >= self.db_size):
                raise ValidationError(f"query {i}: relevant index out of range 0..{self.db_size - 1}")
            if np.unique(r).size != r.size:
                raise ValidationError(f"query {i}: duplicate relevant indices")

    def __len__(self) -> int:
        return len(self.relevant)


def euclid_ground_truth(db: np.ndarray, queries: np.ndarray, k: int,
                        block: int = 256) -> GroundTruth:
    """Exact k nearest database columns for every query column, ties by index."""
    db, queries = as_mat(db), as_mat(queries)
    if db.shape[0] != queries.shape[0]:
        raise ShapeError(f"database has {db.shape[0]} features, queries have {queries.shape[0]}")
    m = db.shape[1]
    if not 1 <= k <= m:
        raise ValidationError(f"k={k} must lie in 1..{m}")
    db_sq = np.einsum("ij,ij->j", db, db)
    out = []
    for start in range(0, queries.shape[1], block):
        qb = queries[:, start:start + block]
        approx = db_sq[None, :] - 2.0 * (qb.T @ db)
        for j in range(qb.shape[1]):
            row = approx[j]
            kth = np.partition(row, k - 1)[k - 1]
            # the expansion is inexact; keep a margin and re-rank candidates exactly
            slack = 1e-9 * (abs(kth) + db_sq.max() + float(qb[:, j] @ qb[:, j])) + 1e-12
            cand = np.flatnonzero(row <= kth + slack)
            diff = db[:, cand] - qb[:, j:j + 1]
            exact = np.einsum("ij,ij->j", diff, diff)
            order = np.lexsort((cand, exact))[:k]
            out.append(np.sort(cand[order]))
    return GroundTruth(out, m)


def label_ground_truth(db_labels, query_labels) -> GroundTruth:
    db_labels = np.asarray(db_labels).reshape(-1)
    query_labels = np.asarray(query_labels).reshape(-1)
    return GroundTruth([np.flatnonzero(db_labels == q) for q in query_labels], db_labels.size)


def average_precision(ranked, relevant, top_n: int | None = None) -> float:
    """AP of one ranked list; the denominator is the full relevant-set size.

    Relevant items beyond ``top_n`` count as misses. An empty relevant set
    gives 0.
    """
    ranked = np.asarray(ranked).reshape(-1)
    relevant = np.asarray(relevant).reshape(-1)
    if relevant.size == 0:
        return 0.0
    if top_n is not None:
        ranked = ranked[:top_n]
    hits = np.isin(ranked, relevant)
    if not hits.any():
        return 0.0
    positions = np.flatnonzero(hits) + 1
    precisions = np.arange(1, positions.size + 1) / positions
    return float(precisions.sum() / relevant.size)


def mean_ap(rankings, gt: GroundTruth, top_n: int | None = None) -> float:
    """Mean of per-query AP. ``rankings`` holds index arrays or objects with ``.indices``."""
    if len(rankings) == 0:
        raise ValidationError("mean_ap needs at least one query")
    if len(rankings) != len(gt):
        raise ValidationError(f"{len(rankings)} rankings for {len(gt)} ground-truth queries")
    aps = [average_precision(getattr(r, "indices", r), rel, top_n)
           for r, rel in zip(rankings, gt.relevant)]
    return float(np.mean(aps))


def precision_at_radius(db_codes: PackedCodes, query_codes: PackedCodes, gt: GroundTruth,
                        r: int = 2) -> float:
    """Mean precision of the codes within Hamming radius ``r`` (0 when none)."""
    return evaluate_codes(db_codes, query_codes, gt, radius=r).precision_at_radius


@dataclass
class CodeMetrics:
    mean_ap: float
    precision_at_radius: float
    empty_ground_truth: int   # queries whose relevant set was empty (AP counted as 0)
    empty_radius: int         # queries with nothing inside the radius (precision counted as 0)


def evaluate_codes(db_codes: PackedCodes, query_codes: PackedCodes, gt: GroundTruth,
                   top_n: int | None = None, radius: int = 2, block: int = 256,
                   workers: int = 1) -> CodeMetrics:
    """mAP of the Hamming ranking and precision within ``radius``, in one pass over the queries."""
    if db_codes.bits != query_codes.bits:
        raise ShapeError(f"database codes have {db_codes.bits} bits, queries have {query_codes.bits}")
    nq = len(query_codes)
    if nq == 0:
        raise ValidationError("no queries to evaluate")
    if nq != len(gt):
        raise ValidationError(f"{nq} query codes for {len(gt)} ground-truth queries")
    if gt.db_size != len(db_codes):
        raise ValidationError(f"ground truth is over {gt.db_size} items, database has {len(db_codes)}")
    aps = np.zeros(nq)
    precs = np.zeros(nq)
    empty_gt = empty_r = 0
    for start in range(0, nq, block):
        d = distances(db_codes, query_codes.words[start:start + block], workers)
        for j, row in enumerate(d):
            rel = gt.relevant[start + j]
            if rel.size == 0:
                empty_gt += 1
            aps[start + j] = average_precision(rank(row), rel, top_n)
            inside = np.flatnonzero(row <= radius)
            if inside.size == 0:
                empty_r += 1
            else:
                precs[start + j] = np.isin(inside, rel).sum() / inside.size
    return CodeMetrics(float(aps.mean()), float(precs.mean()), empty_gt, empty_r)


@dataclass
class MetricReport:
    dataset: str
    method: str
    bits: int
    mean_ap: float
    precision_at_2: float
    wall_time_s: float
    seed: int
    config_hash: str
    extra: dict = field(default_factory=dict)

    def to_record(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)
