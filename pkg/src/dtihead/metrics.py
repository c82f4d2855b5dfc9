"""Evaluation metrics, triplet satisfaction, and the distance-curve export.

All metrics are pure functions that raise UndefinedMetricError rather than
silently returning a default when the quantity is mathematically undefined
(constant inputs for correlation, single-class labels for ranking metrics).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError, UndefinedMetricError
from .model import ModelParams, forward_pairs, rbf_features


@dataclass
class EvalReport:
    """Split-level evaluation summary. Fields not applicable to the task
    mode (e.g. auroc for regression) are None."""

    n: int
    pcc: float | None = None
    auroc: float | None = None
    aupr: float | None = None
    triplet_satisfaction: float | None = None

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "pcc": self.pcc,
            "auroc": self.auroc,
            "aupr": self.aupr,
            "triplet_satisfaction": self.triplet_satisfaction,
        }


def _as_vector(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-dimensional, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise UndefinedMetricError(f"{name} contains non-finite values")
    return arr


def _check_binary(labels: np.ndarray) -> None:
    if not np.all((labels == 0.0) | (labels == 1.0)):
        raise UndefinedMetricError("labels must be 0/1")


def pcc(y, y_hat) -> float:
    """Sample Pearson correlation between two sequences."""
    a = _as_vector(y, "y")
    b = _as_vector(y_hat, "y_hat")
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size < 2:
        raise UndefinedMetricError("pcc needs at least 2 samples")
    ac = a - a.mean()
    bc = b - b.mean()
    denom = math.sqrt(float(np.dot(ac, ac)) * float(np.dot(bc, bc)))
    if denom == 0.0:
        raise UndefinedMetricError("pcc undefined for a constant sequence")
    return float(np.dot(ac, bc)) / denom


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks, ties receiving the mean rank of their group."""
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    ranks = np.empty(scores.size, dtype=np.float64)
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and s[j + 1] == s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(labels, scores) -> float:
    """Probability a random positive outscores a random negative, ties
    counted half (rank / Mann-Whitney formulation)."""
    y = _as_vector(labels, "labels")
    s = _as_vector(scores, "scores")
    if y.shape != s.shape:
        raise DimensionError(f"length mismatch: {y.shape} vs {s.shape}")
    _check_binary(y)
    n_pos = int(np.sum(y == 1.0))
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("auroc needs both classes present")
    ranks = _average_ranks(s)
    rank_sum = float(np.sum(ranks[y == 1.0]))
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def aupr(labels, scores) -> float:
    """Area under the precision-recall step curve.

    Descending-score sweep with average-precision summation
    sum_i (R_i - R_{i-1}) * P_i; tied scores enter as one group.
    """
    y = _as_vector(labels, "labels")
    s = _as_vector(scores, "scores")
    if y.shape != s.shape:
        raise DimensionError(f"length mismatch: {y.shape} vs {s.shape}")
    _check_binary(y)
    n_pos = int(np.sum(y == 1.0))
    if n_pos == 0:
        raise UndefinedMetricError("aupr needs at least one positive")
    order = np.argsort(-s, kind="mergesort")
    ys = y[order]
    ss = s[order]
    tp = 0
    fp = 0
    last_recall = 0.0
    area = 0.0
    i = 0
    n = y.size
    while i < n:
        j = i
        while j + 1 < n and ss[j + 1] == ss[i]:
            j += 1
        group = ys[i : j + 1]
        tp += int(np.sum(group == 1.0))
        fp += int(np.sum(group == 0.0))
        recall = tp / n_pos
        precision = tp / (tp + fp)
        area += (recall - last_recall) * precision
        last_recall = recall
        i = j + 1
    return area


def triplet_satisfaction(
    params: ModelParams, store, batches, alpha: float, film: bool = True
) -> float:
    """Fraction of triplets with d(anchor, pos) + alpha <= d(anchor, neg).

    ``store`` supplies the embedding matrices the batch indices refer to.
    """
    satisfied = 0
    total = 0
    for batch in batches:
        m = batch.n_triplets
        if m == 0:
            continue
        Z_d = store.drug_matrix[np.concatenate([batch.trip_pos_drug,
                                                batch.trip_neg_drug])]
        Z_t = store.prot_matrix[np.concatenate([batch.trip_anchor_prot,
                                                batch.trip_anchor_prot])]
        bt = forward_pairs(params, Z_d.astype(np.float64),
                           Z_t.astype(np.float64), film=film)
        d_ap = bt.dist[:m]
        d_an = bt.dist[m:]
        satisfied += int(np.sum(d_ap + alpha <= d_an))
        total += m
    if total == 0:
        raise UndefinedMetricError("no triplets to score")
    return satisfied / total


def export_distance_curve(
    params: ModelParams,
    n_points: int = 201,
    label_mean: float = 0.0,
    label_std: float = 1.0,
) -> np.ndarray:
    """Head response on an even distance grid over [0, 2].

    Returns an (n_points, 2) array of (distance, prediction), de-normalized
    by the given label statistics. Each grid point is an independent
    evaluation of the same closed form, so output is order-invariant.
    """
    if n_points < 2:
        raise ParameterError(f"n_points must be >= 2, got {n_points}")
    grid = np.linspace(0.0, 2.0, n_points)
    out = np.empty((n_points, 2))
    for i, d in enumerate(grid):
        phi = rbf_features(float(d), params.rbf_centers, params.rbf_sigma)
        y = float(np.dot(params.head_w, phi)) + params.head_b
        out[i, 0] = d
        out[i, 1] = y * label_std + label_mean
    return out


def write_distance_curve(table: np.ndarray, path: str) -> None:
    """Two-column tab-separated text with a header line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("distance\tprediction\n")
        for d, y in table:
            fh.write(f"{d:.17g}\t{y:.17g}\n")
