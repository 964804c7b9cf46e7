"""Per-phoneme Gaussian mixture density estimation and log-likelihood scoring.

Each phoneme's acoustic distribution is a C-component mixture over frozen
features, initialized by k-means and optimized by EM. A segment's score is
its log-likelihood under the intended phoneme's mixture; lower means more
atypical. Covariances are full by default (diagonal mode available for very
high-dimensional features) and carry Cholesky factors so both the density
and the per-component Mahalanobis quadratic form use triangular solves.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp
from sklearn.base import BaseEstimator

from .errors import (
    DimensionMismatch,
    MissingModel,
    NumericalFailure,
    TooFewSamples,
)
from .feature_store import FeatureSet, group_by_phoneme
from .serialization import pack_f32, read_header_blob, unpack_f32, write_header_blob
from .validation import check_fitted, check_matrix, check_vector

LOG_2PI = math.log(2.0 * math.pi)

COVARIANCE_MODES = ("full", "diagonal")

# Cholesky retry ladder: reg_covar, then x10 per retry.
N_REG_RETRIES = 3


def _pairwise_sq_dists(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # ||x||^2 - 2 x.c + ||c||^2, clipped against tiny negatives from rounding
    d2 = (
        np.sum(X**2, axis=1)[:, None]
        - 2.0 * X @ centers.T
        + np.sum(centers**2, axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _kmeans_pp_seeds(X: np.ndarray, n_clusters: int, rng) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((n_clusters, X.shape[1]), dtype=np.float64)
    centers[0] = X[rng.integers(n)]
    closest = _pairwise_sq_dists(X, centers[:1])[:, 0]
    for c in range(1, n_clusters):
        total = closest.sum()
        if total > 0.0:
            idx = rng.choice(n, p=closest / total)
        else:  # all remaining points coincide with chosen centers
            idx = rng.integers(n)
        centers[c] = X[idx]
        closest = np.minimum(closest, _pairwise_sq_dists(X, centers[c : c + 1])[:, 0])
    return centers


def kmeans_init(
    X, n_clusters: int, seed, max_iter: int = 300
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm from k-means++ seeding.

    Returns (centroids, assignments) where each assignment is the nearest
    centroid (ties to the lowest index) and no cluster is empty; empty
    clusters are re-seeded at the point farthest from its assigned centroid.

    Raises TooFewSamples if there are fewer rows than clusters.
    """
    X = check_matrix(X, name="X")
    n = X.shape[0]
    if n_clusters < 1:
        raise ValueError("n_clusters must be >= 1")
    if n < n_clusters:
        raise TooFewSamples(f"{n} samples fewer than {n_clusters} clusters")

    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_seeds(X, n_clusters, rng)
    prev = None
    for it in range(max_iter):
        d2 = _pairwise_sq_dists(X, centers)
        labels = d2.argmin(axis=1)
        empty = sorted(set(range(n_clusters)) - set(labels.tolist()))
        if empty:
            own = d2[np.arange(n), labels].copy()
            for c in empty:
                far = int(own.argmax())
                centers[c] = X[far]
                labels[far] = c
                own[far] = 0.0
        if prev is not None and np.array_equal(labels, prev):
            break
        prev = labels
        if it == max_iter - 1:
            break
        for c in range(n_clusters):
            centers[c] = X[labels == c].mean(axis=0)
    return centers, labels


def _cholesky_with_retries(cov_raw: np.ndarray, reg: float, diag_idx) -> tuple[np.ndarray, np.ndarray, float]:
    """Regularize and factor: returns (cov, lower factor, reg actually used)."""
    reg_used = reg
    for _ in range(N_REG_RETRIES + 1):
        cov = cov_raw.copy()
        cov[diag_idx] += reg_used
        try:
            return cov, np.linalg.cholesky(cov), reg_used
        except np.linalg.LinAlgError:
            reg_used *= 10.0
    raise NumericalFailure(
        f"covariance not positive definite even with reg={reg_used / 10.0:g}"
    )


class PhonemeGmm(BaseEstimator):
    """Gaussian mixture density for one phoneme.

    Parameters
    ----------
    n_components : requested mixture size C; shrunk to the sample count
        when a phoneme has fewer rows than components.
    covariance_mode : "full" (default) or "diagonal".
    reg_covar : added to covariance diagonals every M-step; escalated x10
        up to three times if the Cholesky factorization fails.
    max_iter : EM iteration cap.
    tol : stop when the mean log-likelihood improves by less than this.
    seed : k-means initialization seed (int or numpy SeedSequence).
    """

    def __init__(
        self,
        n_components: int = 32,
        covariance_mode: str = "full",
        reg_covar: float = 1e-6,
        max_iter: int = 100,
        tol: float = 1e-3,
        seed=0,
    ):
        self.n_components = n_components
        self.covariance_mode = covariance_mode
        self.reg_covar = reg_covar
        self.max_iter = max_iter
        self.tol = tol
        self.seed = seed

    # -- fitting ---------------------------------------------------------

    def _check_params(self):
        if self.n_components < 1:
            raise ValueError("n_components must be >= 1")
        if self.covariance_mode not in COVARIANCE_MODES:
            raise ValueError(f"covariance_mode must be one of {COVARIANCE_MODES}")
        if self.reg_covar <= 0 or self.tol <= 0:
            raise ValueError("reg_covar and tol must be positive")

    def fit(self, X):
        self._check_params()
        X = check_matrix(X, min_rows=2)
        n, f = X.shape
        n_comp = min(self.n_components, n)

        _, labels = kmeans_init(X, n_comp, self.seed)
        resp = np.zeros((n, n_comp))
        resp[np.arange(n), labels] = 1.0
        self._m_step(X, resp)

        curve = []
        converged = False
        for it in range(self.max_iter):
            log_prob = self._weighted_log_prob(X)
            log_norm = logsumexp(log_prob, axis=1)
            mean_ll = float(log_norm.mean())
            curve.append(mean_ll)
            if len(curve) >= 2 and abs(curve[-1] - curve[-2]) < self.tol:
                converged = True
                break
            resp = np.exp(log_prob - log_norm[:, None])
            self._m_step(X, resp)
        else:
            # record the likelihood reached by the final M-step
            curve.append(float(logsumexp(self._weighted_log_prob(X), axis=1).mean()))

        self.n_features_ = f
        self.ll_curve_ = curve
        self.n_iter_ = len(curve)
        self.converged_ = converged
        return self

    def _m_step(self, X: np.ndarray, resp: np.ndarray) -> None:
        n, f = X.shape
        n_comp = resp.shape[1]
        nk = resp.sum(axis=0) + 10.0 * np.finfo(np.float64).eps
        weights = nk / n
        weights /= weights.sum()
        means = (resp.T @ X) / nk[:, None]

        if self.covariance_mode == "full":
            covs = np.empty((n_comp, f, f))
            chols = np.empty((n_comp, f, f))
            log_dets = np.empty(n_comp)
            diag_idx = np.diag_indices(f)
            for c in range(n_comp):
                diff = X - means[c]
                cov_raw = (resp[:, c][:, None] * diff).T @ diff / nk[c]
                covs[c], chols[c], _ = _cholesky_with_retries(
                    cov_raw, self.reg_covar, diag_idx
                )
                log_dets[c] = 2.0 * np.log(np.diag(chols[c])).sum()
            self.cholesky_ = chols
            self.log_dets_ = log_dets
        else:
            avg_sq = (resp.T @ (X**2)) / nk[:, None]
            covs = avg_sq - means**2 + self.reg_covar
            if np.any(covs <= 0):
                raise NumericalFailure("diagonal covariance not positive")
            self.cholesky_ = np.sqrt(covs)
            self.log_dets_ = np.log(covs).sum(axis=1)

        self.weights_ = weights
        self.means_ = means
        self.covariances_ = covs

    # -- scoring ---------------------------------------------------------

    def _log_gaussians(self, X: np.ndarray) -> np.ndarray:
        n_comp, f = self.means_.shape
        out = np.empty((X.shape[0], n_comp))
        if self.covariance_mode == "full":
            for c in range(n_comp):
                z = solve_triangular(
                    self.cholesky_[c], (X - self.means_[c]).T, lower=True
                )
                out[:, c] = -0.5 * (
                    f * LOG_2PI + self.log_dets_[c] + np.sum(z**2, axis=0)
                )
        else:
            for c in range(n_comp):
                maha = np.sum((X - self.means_[c]) ** 2 / self.covariances_[c], axis=1)
                out[:, c] = -0.5 * (f * LOG_2PI + self.log_dets_[c] + maha)
        return out

    def _weighted_log_prob(self, X: np.ndarray) -> np.ndarray:
        return self._log_gaussians(X) + np.log(self.weights_)[None, :]

    def score_samples(self, X) -> np.ndarray:
        """Per-row mixture log-likelihood via log-sum-exp over components."""
        check_fitted(self, "weights_")
        X = check_matrix(X)
        if X.shape[1] != self.n_features_:
            raise DimensionMismatch(
                f"expected {self.n_features_} features, got {X.shape[1]}"
            )
        return logsumexp(self._weighted_log_prob(X), axis=1)

    def log_likelihood(self, x) -> float:
        """Mixture log-density at a single feature vector."""
        check_fitted(self, "weights_")
        x = check_vector(x, dim=self.n_features_)
        return float(self.score_samples(x[None, :])[0])

    def mahalanobis_sq(self, component: int, x) -> float:
        """(x - mu_c)^T Sigma_c^{-1} (x - mu_c) via triangular solve."""
        check_fitted(self, "weights_")
        if not 0 <= component < self.means_.shape[0]:
            raise IndexError(f"component {component} out of range")
        x = check_vector(x, dim=self.n_features_)
        diff = x - self.means_[component]
        if self.covariance_mode == "full":
            z = solve_triangular(self.cholesky_[component], diff, lower=True)
            return float(np.dot(z, z))
        return float(np.sum(diff**2 / self.covariances_[component]))


def fit_phoneme_gmms(
    fs: FeatureSet,
    n_components: int = 32,
    covariance_mode: str = "full",
    reg_covar: float = 1e-6,
    max_iter: int = 100,
    tol: float = 1e-3,
    seed: int = 0,
) -> dict[str, PhonemeGmm]:
    """Fit one mixture per phoneme on the train split.

    Phonemes are processed in sorted order with independent child seeds, so
    the result does not depend on record order and each phoneme's fit is
    reproducible in isolation.
    """
    groups = group_by_phoneme(fs, "train")
    phonemes = sorted(groups)
    children = np.random.SeedSequence(seed).spawn(len(phonemes))
    models: dict[str, PhonemeGmm] = {}
    for phoneme, child in zip(phonemes, children):
        X = np.asarray(fs.matrix[groups[phoneme]], dtype=np.float64)
        models[phoneme] = PhonemeGmm(
            n_components=n_components,
            covariance_mode=covariance_mode,
            reg_covar=reg_covar,
            max_iter=max_iter,
            tol=tol,
            seed=child,
        ).fit(X)
    return models


def score_rows_by_phoneme(
    models: dict[str, PhonemeGmm], fs: FeatureSet, split: str
) -> dict[int, float]:
    """Row index -> log-likelihood under that row's phoneme model."""
    groups = group_by_phoneme(fs, split)
    missing = sorted(set(groups) - set(models))
    if missing:
        raise MissingModel(f"no trained model for phonemes: {missing}")
    scores: dict[int, float] = {}
    for phoneme in sorted(groups):
        rows = groups[phoneme]
        values = models[phoneme].score_samples(
            np.asarray(fs.matrix[rows], dtype=np.float64)
        )
        scores.update(zip(rows, values.tolist()))
    return scores


# -- serialization (JSON header + f32le blob) ----------------------------


def save_gmm(model: PhonemeGmm, phoneme: str, header_path) -> None:
    check_fitted(model, "weights_")
    header = {
        "kind": "gmm",
        "phoneme": phoneme,
        "n_components": int(model.weights_.shape[0]),
        "feature_dim": int(model.n_features_),
        "covariance_mode": model.covariance_mode,
    }
    blob = pack_f32(model.weights_, model.means_, model.covariances_)
    write_header_blob(header_path, header, blob)


def load_gmm(header_path) -> tuple[str, PhonemeGmm]:
    header, blob = read_header_blob(header_path)
    n_comp = int(header["n_components"])
    f = int(header["feature_dim"])
    mode = header["covariance_mode"]
    weights, off = unpack_f32(blob, 0, (n_comp,))
    means, off = unpack_f32(blob, off, (n_comp, f))
    cov_shape = (n_comp, f, f) if mode == "full" else (n_comp, f)
    covs, _ = unpack_f32(blob, off, cov_shape)

    model = PhonemeGmm(n_components=n_comp, covariance_mode=mode)
    model.weights_ = np.asarray(weights, dtype=np.float64)
    model.means_ = np.asarray(means, dtype=np.float64)
    model.n_features_ = f
    covs = np.asarray(covs, dtype=np.float64)
    if mode == "full":
        # f32 round-trip can nudge eigenvalues; refactor with the retry ladder
        chols = np.empty_like(covs)
        log_dets = np.empty(n_comp)
        diag_idx = np.diag_indices(f)
        fixed = np.empty_like(covs)
        for c in range(n_comp):
            sym = 0.5 * (covs[c] + covs[c].T)
            try:
                fixed[c], chols[c] = sym, np.linalg.cholesky(sym)
            except np.linalg.LinAlgError:
                base_reg = max(1e-12, 1e-9 * float(np.mean(np.diag(sym))))
                fixed[c], chols[c], _ = _cholesky_with_retries(sym, base_reg, diag_idx)
            log_dets[c] = 2.0 * np.log(np.diag(chols[c])).sum()
        model.covariances_ = fixed
        model.cholesky_ = chols
        model.log_dets_ = log_dets
    else:
        if np.any(covs <= 0):
            raise NumericalFailure("loaded diagonal covariance not positive")
        model.covariances_ = covs
        model.cholesky_ = np.sqrt(covs)
        model.log_dets_ = np.log(covs).sum(axis=1)
    return str(header["phoneme"]), model


__all__ = [
    "PhonemeGmm",
    "kmeans_init",
    "fit_phoneme_gmms",
    "score_rows_by_phoneme",
    "save_gmm",
    "load_gmm",
]
