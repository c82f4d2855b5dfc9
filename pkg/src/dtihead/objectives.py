"""Training objectives: Huber regression, logit BCE, triplet margin.

Every loss returns its value together with exact partial derivatives with
respect to its differentiable inputs, so the training loop never needs
numerical differentiation. Scalar forms are the reference; ``*_batch``
variants vectorize the same math for the hot loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

DEFAULT_HUBER_DELTA = 0.5
DEFAULT_MARGIN = 0.9

TASKS = ("regression", "classification")


@dataclass
class LossConfig:
    """Joint objective: task term plus weighted triplet term."""

    task: str = "regression"
    huber_delta: float = DEFAULT_HUBER_DELTA
    margin: float = DEFAULT_MARGIN
    triplet_weight: float = 1.0

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ParameterError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.huber_delta <= 0:
            raise ParameterError(f"huber_delta must be > 0, got {self.huber_delta}")
        if self.margin < 0:
            raise ParameterError(f"margin must be >= 0, got {self.margin}")
        if self.triplet_weight < 0:
            raise ParameterError(
                f"triplet_weight must be >= 0, got {self.triplet_weight}"
            )


def huber_loss(pred: float, target: float, delta: float = DEFAULT_HUBER_DELTA):
    """Huber loss and d(loss)/d(pred).

    Quadratic 0.5 r^2 for |r| <= delta, linear delta |r| - delta^2 / 2
    beyond. Continuously differentiable at the crossover.
    """
    r = pred - target
    if abs(r) <= delta:
        return 0.5 * r * r, r
    return delta * abs(r) - 0.5 * delta * delta, delta * math.copysign(1.0, r)


def bce_logit_loss(logit: float, label: float):
    """Binary cross entropy on a raw logit and d(loss)/d(logit).

    Uses the overflow-safe form max(x, 0) - x y + log(1 + exp(-|x|)); the
    gradient is sigmoid(x) - y computed without exponentiating +|x|.
    """
    x, y = logit, label
    loss = max(x, 0.0) - x * y + math.log1p(math.exp(-abs(x)))
    if x >= 0:
        sig = 1.0 / (1.0 + math.exp(-x))
    else:
        e = math.exp(x)
        sig = e / (1.0 + e)
    return loss, sig - y


def triplet_loss(d_ap: float, d_an: float, margin: float = DEFAULT_MARGIN):
    """Margin hinge max(0, d_ap - d_an + margin) with subgradients.

    Returns (loss, d/d_ap, d/d_an). At and below the hinge boundary the
    subgradient is zero, so satisfied triplets contribute nothing.
    """
    gap = d_ap - d_an + margin
    if gap > 0.0:
        return gap, 1.0, -1.0
    return 0.0, 0.0, 0.0


def huber_batch(pred: np.ndarray, target: np.ndarray,
                delta: float = DEFAULT_HUBER_DELTA):
    r = pred - target
    a = np.abs(r)
    inside = a <= delta
    loss = np.where(inside, 0.5 * r * r, delta * a - 0.5 * delta * delta)
    grad = np.where(inside, r, delta * np.sign(r))
    return loss, grad


def bce_batch(logit: np.ndarray, label: np.ndarray):
    x = logit
    loss = np.maximum(x, 0.0) - x * label + np.log1p(np.exp(-np.abs(x)))
    # sigmoid via the sign-split stable form
    e = np.exp(-np.abs(x))
    sig = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return loss, sig - label


def triplet_batch(d_ap: np.ndarray, d_an: np.ndarray,
                  margin: float = DEFAULT_MARGIN):
    gap = d_ap - d_an + margin
    active = gap > 0.0
    loss = np.where(active, gap, 0.0)
    g = active.astype(np.float64)
    return loss, g, -g


def total_loss(task_terms: np.ndarray, triplet_terms: np.ndarray,
               config: LossConfig) -> float:
    """Batch objective: mean task loss plus triplet_weight times mean
    triplet loss. An empty triplet set (or zero weight) contributes 0."""
    total = float(np.mean(task_terms)) if task_terms.size else 0.0
    if config.triplet_weight > 0.0 and triplet_terms.size:
        total += config.triplet_weight * float(np.mean(triplet_terms))
    return total
