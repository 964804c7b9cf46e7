"""Linear softmax phoneme classifier and the classifier-based GoP scores.

A single weight matrix W (one row per phoneme, no bias) maps a frozen
feature vector to logits. All four scoring formulations share those logits
and differ only in the final arithmetic:

    gmm_gop      log posterior            log softmax(Wx)[p]
    nn_gop       margin to the max logit  (Wx)[p] - max_q (Wx)[q]
    dnn_gop      prior-normalized         log softmax(Wx)[p] - log prior[p]
    maxlogit_gop raw logit                (Wx)[p]
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator

from .errors import (
    DimensionMismatch,
    EmptyTrainSplit,
    MissingModel,
    ZeroPrior,
)
from .feature_store import FeatureSet
from .optim import Adam
from .serialization import pack_f32, read_header_blob, unpack_f32, write_header_blob
from .validation import check_fitted, check_matrix, check_vector

GOP_METHODS = ("gmm_gop", "nn_gop", "dnn_gop", "maxlogit_gop")


class LinearPhonemeClassifier(BaseEstimator):
    """Softmax classifier trained with full-batch Adam from W = 0.

    The objective is convex, so the zero start is irrelevant to the optimum
    and makes the initial posterior exactly uniform. Training is fully
    deterministic: no minibatching, no random initialization.
    """

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8, max_iter=500):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.max_iter = max_iter

    def fit(self, X, y, classes: tuple[str, ...]):
        """Fit on rows X with integer labels y indexing `classes`."""
        X = check_matrix(X)
        y = np.asarray(y, dtype=np.intp)
        if y.shape[0] != X.shape[0]:
            raise DimensionMismatch("X and y row counts differ")
        n, f = X.shape
        n_classes = len(classes)
        if np.any(y < 0) or np.any(y >= n_classes):
            raise ValueError("labels outside class range")

        W = np.zeros((n_classes, f))
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), y] = 1.0
        opt = Adam(W.shape, self.lr, self.beta1, self.beta2, self.epsilon)

        def loss_and_grad(W):
            logits = X @ W.T
            log_norm = logsumexp(logits, axis=1)
            loss = float(np.mean(log_norm - logits[np.arange(n), y]))
            probs = np.exp(logits - log_norm[:, None])
            grad = (probs - onehot).T @ X / n
            return loss, grad

        curve = []
        for _ in range(self.max_iter):
            loss, grad = loss_and_grad(W)
            curve.append(loss)
            W = W + opt.update(grad)
        curve.append(loss_and_grad(W)[0])

        counts = np.bincount(y, minlength=n_classes).astype(np.float64)
        self.W_ = W
        self.priors_ = counts / counts.sum()
        self.classes_ = tuple(classes)
        self.n_features_ = f
        self.loss_curve_ = curve
        return self

    def logits(self, x) -> np.ndarray:
        """W @ x for one feature vector."""
        check_fitted(self, "W_")
        x = check_vector(x, dim=self.n_features_)
        return self.W_ @ x

    def decision_function(self, X) -> np.ndarray:
        """Row-wise logits, shape (n_rows, n_classes)."""
        check_fitted(self, "W_")
        X = check_matrix(X)
        if X.shape[1] != self.n_features_:
            raise DimensionMismatch(
                f"expected {self.n_features_} features, got {X.shape[1]}"
            )
        return X @ self.W_.T

    def predict_log_proba(self, X) -> np.ndarray:
        logits = self.decision_function(X)
        return logits - logsumexp(logits, axis=1)[:, None]

    def predict(self, X) -> np.ndarray:
        return self.decision_function(X).argmax(axis=1)

    def class_index(self, phoneme: str) -> int:
        try:
            return self.classes_.index(phoneme)
        except ValueError:
            raise MissingModel(f"phoneme {phoneme!r} not among classes") from None


def gop_from_logits(
    logits: np.ndarray, p_idx: np.ndarray, priors: np.ndarray, method: str
) -> np.ndarray:
    """Vectorized GoP over rows of `logits` with target class per row."""
    if method not in GOP_METHODS:
        raise ValueError(f"method must be one of {GOP_METHODS}, got {method!r}")
    rows = np.arange(logits.shape[0])
    target = logits[rows, p_idx]
    if method == "maxlogit_gop":
        return target
    if method == "nn_gop":
        return target - logits.max(axis=1)
    log_post = target - logsumexp(logits, axis=1)
    if method == "gmm_gop":
        return log_post
    # dnn_gop
    p_priors = priors[p_idx]
    if np.any(p_priors == 0.0):
        bad = sorted(set(p_idx[p_priors == 0.0].tolist()))
        raise ZeroPrior(f"zero training prior for class indices {bad}")
    return log_post - np.log(p_priors)


def gop_score(clf: LinearPhonemeClassifier, x, phoneme: str, method: str) -> float:
    """One segment's GoP under the chosen formulation."""
    logits = clf.logits(x)
    idx = clf.class_index(phoneme)
    return float(
        gop_from_logits(logits[None, :], np.array([idx]), clf.priors_, method)[0]
    )


def train_classifier(fs: FeatureSet, **adam_params) -> LinearPhonemeClassifier:
    """Train on the feature set's train split over its full inventory."""
    rows = fs.rows_for_split("train")
    if not rows:
        raise EmptyTrainSplit("no train rows in feature set")
    index_of = {p: i for i, p in enumerate(fs.inventory)}
    y = np.array([index_of[fs.record_by_row(r).phoneme] for r in rows], dtype=np.intp)
    X = np.asarray(fs.matrix[rows], dtype=np.float64)
    clf = LinearPhonemeClassifier(**adam_params)
    return clf.fit(X, y, classes=fs.inventory)


def classifier_scores(
    clf: LinearPhonemeClassifier, fs: FeatureSet, split: str, method: str
) -> dict[int, float]:
    """Row index -> GoP score for every segment of `split`."""
    rows = fs.rows_for_split(split)
    if not rows:
        return {}
    X = np.asarray(fs.matrix[rows], dtype=np.float64)
    p_idx = np.array(
        [clf.class_index(fs.record_by_row(r).phoneme) for r in rows], dtype=np.intp
    )
    values = gop_from_logits(clf.decision_function(X), p_idx, clf.priors_, method)
    return dict(zip(rows, values.tolist()))


def save_classifier(clf: LinearPhonemeClassifier, header_path) -> None:
    check_fitted(clf, "W_")
    header = {
        "kind": "classifier",
        "n_classes": len(clf.classes_),
        "feature_dim": clf.n_features_,
        "inventory": list(clf.classes_),
    }
    write_header_blob(header_path, header, pack_f32(clf.W_, clf.priors_))


def load_classifier(header_path) -> LinearPhonemeClassifier:
    header, blob = read_header_blob(header_path)
    n_classes = int(header["n_classes"])
    f = int(header["feature_dim"])
    W, off = unpack_f32(blob, 0, (n_classes, f))
    priors, _ = unpack_f32(blob, off, (n_classes,))
    clf = LinearPhonemeClassifier()
    clf.W_ = np.asarray(W, dtype=np.float64)
    clf.priors_ = np.asarray(priors, dtype=np.float64)
    clf.classes_ = tuple(header["inventory"])
    clf.n_features_ = f
    clf.loss_curve_ = []
    return clf


__all__ = [
    "GOP_METHODS",
    "LinearPhonemeClassifier",
    "train_classifier",
    "gop_score",
    "gop_from_logits",
    "classifier_scores",
    "save_classifier",
    "load_classifier",
]
