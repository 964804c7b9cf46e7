"""Linear softmax classifier and the four GoP formulations."""

import math

import numpy as np
import pytest

from mixgop.classifier import (
    GOP_METHODS,
    LinearPhonemeClassifier,
    classifier_scores,
    gop_from_logits,
    gop_score,
    load_classifier,
    save_classifier,
    train_classifier,
)
from mixgop.errors import DimensionMismatch, EmptyTrainSplit, ZeroPrior

from conftest import make_feature_set


def separable_blobs(n_per_class=100, seed=0):
    # no bias term, so the blobs must be separable through the origin
    rng = np.random.default_rng(seed)
    a = rng.normal(loc=(4.0, 1.0), scale=0.5, size=(n_per_class, 2))
    b = rng.normal(loc=(1.0, 4.0), scale=0.5, size=(n_per_class, 2))
    X = np.vstack([a, b])
    y = np.array([0] * n_per_class + [1] * n_per_class)
    return X, y


class TestTraining:
    def test_separable_blobs_perfect_accuracy(self):
        X, y = separable_blobs()
        clf = LinearPhonemeClassifier().fit(X, y, classes=("a", "b"))
        assert np.mean(clf.predict(X) == y) == 1.0

    def test_zero_init_gives_uniform_posterior(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(5, 3))
        clf = LinearPhonemeClassifier(max_iter=0).fit(
            X, np.zeros(5, dtype=int), classes=("a", "b", "c", "d")
        )
        log_proba = clf.predict_log_proba(X)
        np.testing.assert_allclose(log_proba, math.log(0.25), atol=1e-12)

    def test_loss_decreases(self):
        rng = np.random.default_rng(2)
        for trial in range(20):
            n = int(rng.integers(20, 100))
            f = int(rng.integers(2, 6))
            k = int(rng.integers(2, 5))
            X = rng.normal(size=(n, f)) + rng.normal(scale=2.0, size=(1, f))
            y = rng.integers(k, size=n)
            clf = LinearPhonemeClassifier(max_iter=100).fit(
                X, y, classes=tuple(f"c{i}" for i in range(k))
            )
            curve = clf.loss_curve_
            assert all(np.isfinite(curve))
            assert curve[-1] < curve[0]

    def test_training_is_deterministic(self):
        X, y = separable_blobs(seed=3)
        w1 = LinearPhonemeClassifier().fit(X, y, classes=("a", "b")).W_
        w2 = LinearPhonemeClassifier().fit(X, y, classes=("a", "b")).W_
        np.testing.assert_array_equal(w1, w2)

    def test_empty_train_split(self):
        fs = make_feature_set(np.zeros((2, 2)), ["a", "a"], splits=["test", "test"])
        with pytest.raises(EmptyTrainSplit):
            train_classifier(fs)

    def test_priors_are_train_frequencies(self, small_fs):
        clf = train_classifier(small_fs, max_iter=1)
        np.testing.assert_allclose(clf.priors_, [0.5, 0.5])
        assert abs(clf.priors_.sum() - 1.0) < 1e-9


class TestLogits:
    def test_zero_weights(self):
        clf = LinearPhonemeClassifier()
        clf.W_ = np.zeros((3, 4))
        clf.n_features_ = 4
        clf.classes_ = ("a", "b", "c")
        clf.priors_ = np.full(3, 1 / 3)
        np.testing.assert_array_equal(clf.logits(np.ones(4)), np.zeros(3))

    def test_basis_vector_selects_column(self):
        rng = np.random.default_rng(0)
        clf = LinearPhonemeClassifier()
        clf.W_ = rng.normal(size=(3, 4))
        clf.n_features_ = 4
        e1 = np.zeros(4)
        e1[0] = 1.0
        np.testing.assert_array_equal(clf.logits(e1), clf.W_[:, 0])

    def test_matches_double_loop_matmul(self):
        rng = np.random.default_rng(1)
        clf = LinearPhonemeClassifier()
        clf.W_ = rng.normal(size=(5, 7))
        clf.n_features_ = 7
        x = rng.normal(size=7)
        got = clf.logits(x)
        want = np.array(
            [sum(clf.W_[i, j] * x[j] for j in range(7)) for i in range(5)]
        )
        np.testing.assert_allclose(got, want, rtol=1e-7)

    def test_dimension_mismatch(self):
        clf = LinearPhonemeClassifier()
        clf.W_ = np.zeros((2, 3))
        clf.n_features_ = 3
        with pytest.raises(DimensionMismatch):
            clf.logits(np.zeros(4))


def _fitted_clf(n_classes=4, dim=3, seed=0, priors=None):
    rng = np.random.default_rng(seed)
    clf = LinearPhonemeClassifier()
    clf.W_ = rng.normal(size=(n_classes, dim))
    clf.n_features_ = dim
    clf.classes_ = tuple(f"c{i}" for i in range(n_classes))
    clf.priors_ = (
        np.full(n_classes, 1.0 / n_classes) if priors is None else np.asarray(priors)
    )
    return clf


class TestGopFormulations:
    def test_zero_logits_values(self):
        clf = _fitted_clf()
        clf.W_ = np.zeros_like(clf.W_)
        x = np.ones(3)
        assert gop_score(clf, x, "c0", "gmm_gop") == pytest.approx(
            math.log(0.25), abs=1e-12
        )
        assert gop_score(clf, x, "c0", "nn_gop") == 0.0
        assert gop_score(clf, x, "c0", "maxlogit_gop") == 0.0

    def test_uniform_priors_identity(self):
        clf = _fitted_clf(n_classes=4)
        rng = np.random.default_rng(1)
        for _ in range(50):
            x = rng.normal(size=3)
            gmm = gop_score(clf, x, "c2", "gmm_gop")
            dnn = gop_score(clf, x, "c2", "dnn_gop")
            assert dnn == gmm + math.log(4)

    def test_shift_behavior(self):
        rng = np.random.default_rng(2)
        priors = np.array([0.1, 0.2, 0.3, 0.4])
        for _ in range(100):
            logits = rng.normal(size=(1, 4))
            idx = np.array([int(rng.integers(4))])
            for c in (-5.0, 1.0, 7.0):
                shifted = logits + c
                for method in ("gmm_gop", "nn_gop", "dnn_gop"):
                    a = gop_from_logits(logits, idx, priors, method)[0]
                    b = gop_from_logits(shifted, idx, priors, method)[0]
                    assert b == pytest.approx(a, abs=1e-10)
                a = gop_from_logits(logits, idx, priors, "maxlogit_gop")[0]
                b = gop_from_logits(shifted, idx, priors, "maxlogit_gop")[0]
                assert b - a == pytest.approx(c, abs=1e-10)

    def test_zero_prior_raises(self):
        clf = _fitted_clf(priors=[0.5, 0.5, 0.0, 0.0])
        with pytest.raises(ZeroPrior):
            gop_score(clf, np.ones(3), "c2", "dnn_gop")

    def test_nn_gop_nonpositive_and_zero_iff_argmax(self):
        rng = np.random.default_rng(3)
        clf = _fitted_clf()
        for _ in range(50):
            x = rng.normal(size=3)
            logits = clf.logits(x)
            best = int(logits.argmax())
            for i, cls in enumerate(clf.classes_):
                value = gop_score(clf, x, cls, "nn_gop")
                assert value <= 0.0
                assert (value == 0.0) == (i == best)

    def test_gmm_gop_nonpositive_and_softmax_normalized(self):
        rng = np.random.default_rng(4)
        clf = _fitted_clf()
        for _ in range(50):
            x = rng.normal(size=3)
            posts = np.exp(
                [gop_score(clf, x, c, "gmm_gop") for c in clf.classes_]
            )
            assert np.all(posts > 0)
            assert abs(posts.sum() - 1.0) < 1e-9
            assert np.all(np.log(posts) <= 0.0)

    def test_unknown_method_rejected(self):
        clf = _fitted_clf()
        with pytest.raises(ValueError):
            gop_score(clf, np.ones(3), "c0", "nope")


class TestScoresAndSerialization:
    def test_classifier_scores_cover_split(self, small_fs):
        clf = train_classifier(small_fs, max_iter=20)
        for method in GOP_METHODS:
            scores = classifier_scores(clf, small_fs, "test", method)
            assert sorted(scores) == small_fs.rows_for_split("test")

    def test_round_trip(self, tmp_path, small_fs):
        clf = train_classifier(small_fs, max_iter=20)
        save_classifier(clf, tmp_path / "classifier.json")
        loaded = load_classifier(tmp_path / "classifier.json")
        assert loaded.classes_ == clf.classes_
        X = np.asarray(small_fs.matrix[:4], dtype=np.float64)
        np.testing.assert_allclose(
            loaded.decision_function(X), clf.decision_function(X), rtol=1e-6, atol=1e-6
        )
