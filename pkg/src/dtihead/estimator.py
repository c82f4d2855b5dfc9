"""Scikit-learn style wrappers around the pair head.

Rows of X are concatenated embedding pairs: the first ``d_drug`` columns
hold the drug embedding, the rest the protein embedding. Identical rows on
either side are collapsed into shared entities, which is what gives the
triplet term a sensible negative pool when callers pass repeated entities.
Fitting runs the same loop as the command-line trainer with every row in
the train split; entity matrices pass through the store's float32 layout so
estimator results match a store-based run exactly.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data import LABEL_BINARY, LABEL_REAL, make_store
from .errors import DimensionError, ParameterError
from .training import RunConfig, predict, train


def check_pair_matrix(X, d_drug: int) -> np.ndarray:
    """Validate a concatenated (drug | protein) embedding matrix."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if not isinstance(d_drug, (int, np.integer)) or d_drug < 1:
        raise ParameterError(f"d_drug must be a positive int, got {d_drug!r}")
    if X.shape[1] <= d_drug:
        raise DimensionError(
            f"X has {X.shape[1]} columns; need more than d_drug={d_drug} "
            "so a protein block remains"
        )
    return X


def split_pair_matrix(X, d_drug: int):
    """(drug block, protein block) views of a validated pair matrix."""
    X = check_pair_matrix(X, d_drug)
    return X[:, :d_drug], X[:, d_drug:]


def _entities(block: np.ndarray, prefix: str):
    """Collapse identical rows; returns (ids, unique float32 matrix, index)."""
    as32 = block.astype(np.float32)
    uniq, inverse = np.unique(as32, axis=0, return_inverse=True)
    ids = [f"{prefix}{i:05d}" for i in range(uniq.shape[0])]
    return ids, uniq, inverse.astype(np.int64)


class _BasePairEstimator(BaseEstimator):
    def __init__(self, d_drug=None, d_shared=32, k=16, sigma=0.2, epochs=30,
                 batch_size=32, peak_lr=5e-3, warmup_steps=20,
                 weight_decay=0.01, alpha=0.9, delta=0.5, triplet_weight=1.0,
                 ablation="full", normalize_labels=True, seed=0):
        self.d_drug = d_drug
        self.d_shared = d_shared
        self.k = k
        self.sigma = sigma
        self.epochs = epochs
        self.batch_size = batch_size
        self.peak_lr = peak_lr
        self.warmup_steps = warmup_steps
        self.weight_decay = weight_decay
        self.alpha = alpha
        self.delta = delta
        self.triplet_weight = triplet_weight
        self.ablation = ablation
        self.normalize_labels = normalize_labels
        self.seed = seed

    _mode = "regression"

    def _run_config(self) -> RunConfig:
        return RunConfig(
            mode=self._mode, ablation=self.ablation, epochs=self.epochs,
            batch_size=self.batch_size, peak_lr=self.peak_lr,
            warmup_steps=self.warmup_steps, weight_decay=self.weight_decay,
            alpha=self.alpha, delta=self.delta, sigma=self.sigma, k=self.k,
            d_shared=self.d_shared, seed=self.seed,
            normalize_labels=self.normalize_labels,
            triplet_weight=self.triplet_weight,
        )

    def _fit(self, X, y, label_kind: int):
        if self.d_drug is None:
            raise ParameterError("d_drug must be set to the drug block width")
        drug_block, prot_block = split_pair_matrix(X, self.d_drug)
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (X.shape[0],):
            raise DimensionError(
                f"y has shape {y.shape}, expected ({X.shape[0]},)"
            )

        drug_ids, drug_matrix, rec_drug = _entities(drug_block, "D")
        prot_ids, prot_matrix, rec_prot = _entities(prot_block, "P")
        store = make_store(
            drug_ids=drug_ids, prot_ids=prot_ids,
            drug_matrix=drug_matrix, prot_matrix=prot_matrix,
            rec_drug=rec_drug, rec_prot=rec_prot,
            rec_label=y.astype(np.float32),
            rec_split=np.zeros(y.shape[0], dtype=np.uint8),
            label_kind=label_kind, has_splits=True,
        )
        self.checkpoint_, self.report_ = train(store, self._run_config())
        self.n_features_in_ = X.shape[1]
        return self

    def _pair_scores(self, X) -> np.ndarray:
        check_is_fitted(self, "checkpoint_")
        drug_block, prot_block = split_pair_matrix(X, self.d_drug)
        if X.shape[1] != self.n_features_in_:
            raise DimensionError(
                f"X has {X.shape[1]} columns, fitted on {self.n_features_in_}"
            )
        # round-trip through float32 like the fitting store did
        drug_block = drug_block.astype(np.float32).astype(np.float64)
        prot_block = prot_block.astype(np.float32).astype(np.float64)
        return np.array([
            predict(self.checkpoint_, z_d=zd, z_t=zt)
            for zd, zt in zip(drug_block, prot_block)
        ])


class PairAffinityRegressor(RegressorMixin, _BasePairEstimator):
    """Continuous affinity prediction for (drug, protein) embedding pairs."""

    _mode = "regression"

    def fit(self, X, y):
        return self._fit(X, y, LABEL_REAL)

    def predict(self, X) -> np.ndarray:
        return self._pair_scores(X)


class PairInteractionClassifier(ClassifierMixin, _BasePairEstimator):
    """Binary interaction prediction for (drug, protein) embedding pairs."""

    _mode = "classification"

    def fit(self, X, y):
        y = np.asarray(y, dtype=np.float64)
        values = np.unique(y)
        if not np.all(np.isin(values, (0.0, 1.0))):
            raise ParameterError(
                f"classifier labels must be 0/1, got values {values[:5]}"
            )
        self.classes_ = np.array([0, 1])
        return self._fit(X, y, LABEL_BINARY)

    def predict_proba(self, X) -> np.ndarray:
        p1 = self._pair_scores(X)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X) -> np.ndarray:
        return (self._pair_scores(X) >= 0.5).astype(np.int64)
