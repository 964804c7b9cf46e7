"""Non-parametric OOD baselines: per-phoneme kNN and RBF one-class SVMs.

Both detectors score with the convention used everywhere in this package:
higher = more typical. kNN negates the distance to the k-th nearest
training row (k = 10% of the phoneme's training rows); the one-class SVM
uses the signed distance from the separating hyperplane.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator

from .errors import DegenerateData, DimensionMismatch, MissingModel
from .feature_store import FeatureSet, group_by_phoneme
from .serialization import pack_f32, read_header_blob, unpack_f32, write_header_blob
from .validation import check_fitted, check_matrix, check_vector

# Snap tolerance for dual variables sitting on a box bound.
_BOUND_SNAP = 1e-12
# Dual coefficients above this count as support vectors.
_SV_CUTOFF = 1e-8


class KnnOutlierScorer(BaseEstimator):
    """Exact k-th-nearest-neighbor distance scorer.

    k is the ceiling of `quantile` times the training-row count, so the
    score is the (negated) largest distance within the nearest 10% of the
    training data by default.
    """

    def __init__(self, quantile: float = 0.10):
        self.quantile = quantile

    def fit(self, X):
        if not 0.0 < self.quantile <= 1.0:
            raise ValueError("quantile must be in (0, 1]")
        X = check_matrix(X, min_rows=1)
        self.train_ = X
        self.k_ = min(X.shape[0], max(1, math.ceil(self.quantile * X.shape[0])))
        self.n_features_ = X.shape[1]
        return self

    def _kth_distance(self, x: np.ndarray, k: int) -> float:
        dists = np.linalg.norm(self.train_ - x[None, :], axis=1)
        return float(np.partition(dists, k - 1)[k - 1])

    def score(self, x, k: int | None = None) -> float:
        """Negated distance to the k-th nearest training row."""
        check_fitted(self, "train_")
        x = check_vector(x, dim=self.n_features_)
        k = self.k_ if k is None else k
        if not 1 <= k <= self.train_.shape[0]:
            raise ValueError(f"k={k} outside [1, {self.train_.shape[0]}]")
        return -self._kth_distance(x, k)

    def score_samples(self, X) -> np.ndarray:
        check_fitted(self, "train_")
        X = check_matrix(X)
        if X.shape[1] != self.n_features_:
            raise DimensionMismatch(
                f"expected {self.n_features_} features, got {X.shape[1]}"
            )
        return np.array([-self._kth_distance(x, self.k_) for x in X])


def rbf_kernel(X: np.ndarray, Y: np.ndarray, gamma: float) -> np.ndarray:
    d2 = (
        np.sum(X**2, axis=1)[:, None]
        - 2.0 * X @ Y.T
        + np.sum(Y**2, axis=1)[None, :]
    )
    return np.exp(-gamma * np.maximum(d2, 0.0))


class OneClassSvmSmo(BaseEstimator):
    """One-class SVM trained by pairwise (SMO-style) coordinate updates.

    Solves min 0.5 a'Qa subject to 0 <= a_i <= 1/(nu N) and sum a = 1,
    picking the maximally KKT-violating pair each iteration and computing
    kernel rows on demand (no Gram matrix, no cache beyond the active pair).
    The decision value is sum_i a_i K(sv_i, x) - rho; positive = inlier.
    """

    def __init__(self, nu: float = 0.5, gamma="scale", tol: float = 1e-3,
                 max_iter: int = 100_000):
        self.nu = nu
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X):
        if not 0.0 < self.nu <= 1.0:
            raise ValueError("nu must be in (0, 1]")
        X = check_matrix(X, min_rows=2)
        if np.all(X == X[0]):
            raise DegenerateData("all training rows identical")
        n, f = X.shape
        if self.gamma == "scale":
            gamma = 1.0 / (f * float(X.var()))
        else:
            gamma = float(self.gamma)
            if gamma <= 0:
                raise ValueError("gamma must be positive")

        c_box = 1.0 / (self.nu * n)
        alpha = np.zeros(n)
        n_full = int(self.nu * n)
        alpha[:n_full] = c_box
        if n_full < n:
            alpha[n_full] = 1.0 - n_full * c_box

        def kernel_row(i: int) -> np.ndarray:
            return rbf_kernel(X[i : i + 1], X, gamma)[0]

        # g = Q alpha, maintained incrementally after the initial pass
        g = np.zeros(n)
        for i in np.flatnonzero(alpha > 0.0):
            g += alpha[i] * kernel_row(i)

        snap = _BOUND_SNAP * max(1.0, c_box)
        n_iter = 0
        converged = False
        for n_iter in range(1, self.max_iter + 1):
            up = alpha < c_box - snap
            low = alpha > snap
            if not up.any() or not low.any():
                converged = True
                break
            i = int(np.flatnonzero(up)[g[up].argmin()])
            j = int(np.flatnonzero(low)[g[low].argmax()])
            if g[j] - g[i] < self.tol:
                converged = True
                break
            ki = kernel_row(i)
            kj = kernel_row(j)
            quad = max(ki[i] + kj[j] - 2.0 * ki[j], 1e-12)
            t = (g[j] - g[i]) / quad
            t = min(t, c_box - alpha[i], alpha[j])
            t = max(t, -alpha[i], alpha[j] - c_box)
            alpha[i] += t
            alpha[j] -= t
            for idx in (i, j):
                if alpha[idx] < snap:
                    alpha[idx] = 0.0
                elif alpha[idx] > c_box - snap:
                    alpha[idx] = c_box
            g += t * (ki - kj)

        free = (alpha > snap) & (alpha < c_box - snap)
        if free.any():
            rho = float(g[free].mean())
        else:
            at_upper = alpha >= c_box - snap
            at_lower = alpha <= snap
            lb = g[at_upper].max() if at_upper.any() else None
            ub = g[at_lower].min() if at_lower.any() else None
            if lb is None:
                rho = float(ub)
            elif ub is None:
                rho = float(lb)
            else:
                rho = float((lb + ub) / 2.0)

        sv = alpha > _SV_CUTOFF
        self.support_vectors_ = X[sv]
        self.dual_coefs_ = alpha[sv]
        self.rho_ = rho
        self.gamma_ = gamma
        self.n_features_ = f
        self.n_iter_ = n_iter
        self.converged_ = converged
        return self

    def decision_function(self, X) -> np.ndarray:
        check_fitted(self, "dual_coefs_")
        X = check_matrix(X)
        if X.shape[1] != self.n_features_:
            raise DimensionMismatch(
                f"expected {self.n_features_} features, got {X.shape[1]}"
            )
        k = rbf_kernel(X, self.support_vectors_, self.gamma_)
        return k @ self.dual_coefs_ - self.rho_

    def score(self, x) -> float:
        x = check_vector(x, dim=self.n_features_)
        return float(self.decision_function(x[None, :])[0])


# -- per-phoneme / global drivers ----------------------------------------


def fit_knn_indexes(fs: FeatureSet, quantile: float = 0.10) -> dict[str, KnnOutlierScorer]:
    groups = group_by_phoneme(fs, "train")
    return {
        p: KnnOutlierScorer(quantile=quantile).fit(
            np.asarray(fs.matrix[groups[p]], dtype=np.float64)
        )
        for p in sorted(groups)
    }


def fit_global_ocsvm(fs: FeatureSet, nu: float = 0.5, gamma="scale") -> OneClassSvmSmo:
    rows = fs.rows_for_split("train")
    X = np.asarray(fs.matrix[rows], dtype=np.float64)
    return OneClassSvmSmo(nu=nu, gamma=gamma).fit(X)


def fit_per_phoneme_ocsvm(
    fs: FeatureSet, nu: float = 0.5, gamma="scale"
) -> dict[str, OneClassSvmSmo]:
    groups = group_by_phoneme(fs, "train")
    return {
        p: OneClassSvmSmo(nu=nu, gamma=gamma).fit(
            np.asarray(fs.matrix[groups[p]], dtype=np.float64)
        )
        for p in sorted(groups)
    }


def detector_scores(
    models, fs: FeatureSet, split: str
) -> dict[int, float]:
    """Row index -> score for a global model or a per-phoneme model map."""
    scores: dict[int, float] = {}
    if isinstance(models, dict):
        groups = group_by_phoneme(fs, split)
        missing = sorted(set(groups) - set(models))
        if missing:
            raise MissingModel(f"no trained model for phonemes: {missing}")
        for phoneme in sorted(groups):
            rows = groups[phoneme]
            X = np.asarray(fs.matrix[rows], dtype=np.float64)
            values = models[phoneme].score_samples(X) \
                if hasattr(models[phoneme], "score_samples") \
                else models[phoneme].decision_function(X)
            scores.update(zip(rows, values.tolist()))
    else:
        rows = fs.rows_for_split(split)
        X = np.asarray(fs.matrix[rows], dtype=np.float64)
        scores.update(zip(rows, models.decision_function(X).tolist()))
    return scores


# -- serialization --------------------------------------------------------


def save_knn(index: KnnOutlierScorer, phoneme: str, header_path) -> None:
    check_fitted(index, "train_")
    header = {
        "kind": "knn",
        "phoneme": phoneme,
        "n_rows": int(index.train_.shape[0]),
        "feature_dim": index.n_features_,
        "quantile": index.quantile,
        "k": index.k_,
    }
    write_header_blob(header_path, header, pack_f32(index.train_))


def load_knn(header_path) -> tuple[str, KnnOutlierScorer]:
    header, blob = read_header_blob(header_path)
    n, f = int(header["n_rows"]), int(header["feature_dim"])
    train, _ = unpack_f32(blob, 0, (n, f))
    index = KnnOutlierScorer(quantile=float(header["quantile"]))
    index.train_ = np.asarray(train, dtype=np.float64)
    index.k_ = int(header["k"])
    index.n_features_ = f
    return str(header["phoneme"]), index


def save_ocsvm(model: OneClassSvmSmo, scope: str, header_path) -> None:
    check_fitted(model, "dual_coefs_")
    header = {
        "kind": "ocsvm",
        "scope": scope,
        "n_support": int(model.support_vectors_.shape[0]),
        "feature_dim": model.n_features_,
        "nu": model.nu,
        "gamma": model.gamma_,
        "rho": model.rho_,
    }
    blob = pack_f32(model.support_vectors_, model.dual_coefs_)
    write_header_blob(header_path, header, blob)


def load_ocsvm(header_path) -> tuple[str, OneClassSvmSmo]:
    header, blob = read_header_blob(header_path)
    m, f = int(header["n_support"]), int(header["feature_dim"])
    sv, off = unpack_f32(blob, 0, (m, f))
    coefs, _ = unpack_f32(blob, off, (m,))
    model = OneClassSvmSmo(nu=float(header["nu"]))
    model.support_vectors_ = np.asarray(sv, dtype=np.float64)
    model.dual_coefs_ = np.asarray(coefs, dtype=np.float64)
    model.rho_ = float(header["rho"])
    model.gamma_ = float(header["gamma"])
    model.n_features_ = f
    return str(header["scope"]), model


__all__ = [
    "KnnOutlierScorer",
    "OneClassSvmSmo",
    "rbf_kernel",
    "fit_knn_indexes",
    "fit_global_ocsvm",
    "fit_per_phoneme_ocsvm",
    "detector_scores",
    "save_knn",
    "load_knn",
    "save_ocsvm",
    "load_ocsvm",
]
