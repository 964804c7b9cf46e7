"""Mixture density estimation: k-means init, EM, likelihood, Mahalanobis."""

import math

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from mixgop.errors import (
    DimensionMismatch,
    MissingModel,
    NumericalFailure,
    TooFewSamples,
)
from mixgop.evaluate import build_score_table, pool_utterance
from mixgop.gmm import (
    PhonemeGmm,
    fit_phoneme_gmms,
    kmeans_init,
    load_gmm,
    save_gmm,
    score_rows_by_phoneme,
)

from conftest import make_feature_set


def dense_log_likelihood(weights, means, covs, x):
    """Oracle: mixture log-density via explicit inverse and determinant."""
    f = x.shape[0]
    parts = []
    for w, mu, cov in zip(weights, means, covs):
        diff = x - mu
        quad = diff @ np.linalg.inv(cov) @ diff
        _, logdet = np.linalg.slogdet(cov)
        parts.append(math.log(w) - 0.5 * (f * math.log(2 * math.pi) + logdet + quad))
    m = max(parts)
    return m + math.log(sum(math.exp(p - m) for p in parts))


def random_model(rng, n_components, dim):
    """Fitted-shaped model with random SPD covariances."""
    model = PhonemeGmm(n_components=n_components)
    w = rng.uniform(0.5, 2.0, size=n_components)
    model.weights_ = w / w.sum()
    model.means_ = rng.normal(size=(n_components, dim))
    covs = np.empty((n_components, dim, dim))
    for c in range(n_components):
        A = rng.normal(size=(dim, dim))
        covs[c] = A @ A.T + dim * np.eye(dim)
    model.covariances_ = covs
    model.cholesky_ = np.linalg.cholesky(covs)
    model.log_dets_ = np.array(
        [2.0 * np.log(np.diag(L)).sum() for L in model.cholesky_]
    )
    model.n_features_ = dim
    return model


class TestKmeansInit:
    def test_two_points_two_clusters(self):
        X = np.array([[0.0, 0.0], [5.0, 5.0]])
        centers, labels = kmeans_init(X, 2, seed=0)
        assert sorted(labels.tolist()) == [0, 1]
        inertia = sum(
            np.sum((X[i] - centers[labels[i]]) ** 2) for i in range(2)
        )
        assert inertia == 0.0

    def test_separated_blobs(self):
        rng = np.random.default_rng(0)
        a = rng.normal(loc=0.0, size=(500, 2))
        b = rng.normal(loc=10.0, size=(500, 2))
        X = np.vstack([a, b])
        centers, labels = kmeans_init(X, 2, seed=1)
        blob_means = np.array([a.mean(axis=0), b.mean(axis=0)])
        for center in centers:
            assert min(np.linalg.norm(center - m) for m in blob_means) < 0.5
        # assignments are nearest-centroid
        d2 = ((X[:, None, :] - centers[None]) ** 2).sum(axis=2)
        np.testing.assert_array_equal(labels, d2.argmin(axis=1))

    def test_single_cluster_is_column_mean(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(50, 4))
        centers, labels = kmeans_init(X, 1, seed=0)
        np.testing.assert_allclose(centers[0], X.mean(axis=0), rtol=0, atol=1e-12)
        assert np.all(labels == 0)

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamples):
            kmeans_init(np.zeros((2, 2)), 3, seed=0)

    def test_no_empty_clusters(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(40, 2))
        for seed in range(5):
            _, labels = kmeans_init(X, 8, seed=seed)
            assert set(labels.tolist()) == set(range(8))

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(100, 3))
        c1, l1 = kmeans_init(X, 4, seed=42)
        c2, l2 = kmeans_init(X, 4, seed=42)
        np.testing.assert_array_equal(c1, c2)
        np.testing.assert_array_equal(l1, l2)


class TestFitGmm:
    def test_single_gaussian_recovery(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(500, 2))
        model = PhonemeGmm(n_components=1, seed=0).fit(X)
        assert np.linalg.norm(model.means_[0]) < 0.15
        assert np.all(np.abs(np.diag(model.covariances_[0]) - 1.0) < 0.2)

    def test_auto_shrink_components(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(10, 2))
        model = PhonemeGmm(n_components=32, seed=0).fit(X)
        assert model.weights_.shape[0] == 10

    def test_planted_three_component_recovery(self):
        rng = np.random.default_rng(2)
        true_means = np.array([[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]])
        true_weights = np.array([0.5, 0.3, 0.2])
        counts = (true_weights * 5000).astype(int)
        X = np.vstack(
            [
                rng.normal(loc=m, scale=0.7, size=(c, 2))
                for m, c in zip(true_means, counts)
            ]
        )
        model = PhonemeGmm(n_components=3, seed=0).fit(X)
        cost = np.linalg.norm(
            model.means_[:, None, :] - true_means[None, :, :], axis=2
        )
        rows, cols = linear_sum_assignment(cost)
        assert np.all(cost[rows, cols] < 0.1)
        matched_weights = model.weights_[rows]
        assert np.all(np.abs(matched_weights - true_weights[cols]) < 0.05)

    def test_monotone_log_likelihood(self):
        rng = np.random.default_rng(3)
        for trial in range(10):
            n = int(rng.integers(30, 200))
            f = int(rng.integers(2, 6))
            X = rng.normal(size=(n, f)) * rng.uniform(0.5, 2.0)
            model = PhonemeGmm(n_components=4, seed=trial, tol=1e-12, max_iter=30).fit(X)
            curve = model.ll_curve_
            assert all(b >= a - 1e-8 for a, b in zip(curve, curve[1:]))

    def test_weights_sum_to_one(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(100, 3))
        model = PhonemeGmm(n_components=5, seed=0).fit(X)
        assert abs(model.weights_.sum() - 1.0) < 1e-9
        assert np.all(model.weights_ >= 0)

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamples):
            PhonemeGmm(n_components=1).fit(np.zeros((1, 2)))

    def test_diagonal_mode(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(300, 4)) * np.array([1.0, 2.0, 0.5, 1.5])
        model = PhonemeGmm(n_components=1, covariance_mode="diagonal", seed=0).fit(X)
        assert model.covariances_.shape == (1, 4)
        np.testing.assert_allclose(
            model.covariances_[0], X.var(axis=0), rtol=0.05, atol=0.05
        )

    def test_cholesky_retry_ladder_exhaustion(self):
        from mixgop.gmm import _cholesky_with_retries

        bad = np.array([[-1e6]])
        with pytest.raises(NumericalFailure):
            _cholesky_with_retries(bad, 1e-6, np.diag_indices(1))

    def test_cholesky_retry_ladder_recovers(self):
        from mixgop.gmm import _cholesky_with_retries

        # indefinite by -5e-6 on the diagonal: first attempt (reg 1e-6)
        # fails, an escalated retry succeeds
        cov_raw = np.diag([1.0, -5e-6])
        cov, chol, reg_used = _cholesky_with_retries(cov_raw, 1e-6, np.diag_indices(2))
        assert reg_used > 1e-6
        np.testing.assert_allclose(chol @ chol.T, cov, atol=1e-12)

    def test_log_det_cache_consistent(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(200, 3))
        model = PhonemeGmm(n_components=3, seed=0).fit(X)
        for c in range(3):
            expected = 2.0 * np.log(np.diag(model.cholesky_[c])).sum()
            assert model.log_dets_[c] == expected


class TestLogLikelihood:
    def test_standard_normal_peak(self):
        model = random_model(np.random.default_rng(0), 1, 2)
        model.means_[0] = 0.0
        model.covariances_[0] = np.eye(2)
        model.cholesky_[0] = np.eye(2)
        model.log_dets_[0] = 0.0
        model.weights_[0] = 1.0
        value = model.log_likelihood(np.zeros(2))
        assert value == pytest.approx(-math.log(2 * math.pi), abs=1e-12)

    def test_identical_components_collapse(self):
        rng = np.random.default_rng(1)
        single = random_model(rng, 1, 3)
        double = PhonemeGmm(n_components=2)
        double.weights_ = np.array([0.5, 0.5])
        double.means_ = np.repeat(single.means_, 2, axis=0)
        double.covariances_ = np.repeat(single.covariances_, 2, axis=0)
        double.cholesky_ = np.repeat(single.cholesky_, 2, axis=0)
        double.log_dets_ = np.repeat(single.log_dets_, 2, axis=0)
        double.n_features_ = 3
        x = rng.normal(size=3)
        assert double.log_likelihood(x) == pytest.approx(
            single.log_likelihood(x), abs=1e-12
        )

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(2)
        model = random_model(rng, 4, 5)
        for _ in range(100):
            x = rng.normal(scale=2.0, size=5)
            got = model.log_likelihood(x)
            want = dense_log_likelihood(
                model.weights_, model.means_, model.covariances_, x
            )
            assert got == pytest.approx(want, rel=1e-6)

    def test_component_permutation_invariance(self):
        rng = np.random.default_rng(3)
        model = random_model(rng, 4, 3)
        perm = np.array([2, 0, 3, 1])
        permuted = PhonemeGmm(n_components=4)
        permuted.weights_ = model.weights_[perm]
        permuted.means_ = model.means_[perm]
        permuted.covariances_ = model.covariances_[perm]
        permuted.cholesky_ = model.cholesky_[perm]
        permuted.log_dets_ = model.log_dets_[perm]
        permuted.n_features_ = 3
        for _ in range(20):
            x = rng.normal(size=3)
            assert model.log_likelihood(x) == pytest.approx(
                permuted.log_likelihood(x), abs=1e-10
            )

    def test_dimension_mismatch(self):
        model = random_model(np.random.default_rng(4), 2, 3)
        with pytest.raises(DimensionMismatch):
            model.log_likelihood(np.zeros(4))


class TestMahalanobis:
    def test_zero_at_mean(self):
        model = random_model(np.random.default_rng(0), 2, 4)
        assert model.mahalanobis_sq(0, model.means_[0]) == 0.0
        assert model.mahalanobis_sq(1, model.means_[1]) == 0.0

    def test_identity_covariance_is_squared_euclidean(self):
        model = random_model(np.random.default_rng(1), 1, 3)
        model.covariances_[0] = np.eye(3)
        model.cholesky_[0] = np.eye(3)
        x = np.array([1.0, 2.0, 2.0])
        expected = np.sum((x - model.means_[0]) ** 2)
        assert model.mahalanobis_sq(0, x) == pytest.approx(expected, rel=1e-12)

    def test_matches_explicit_inverse(self):
        rng = np.random.default_rng(2)
        model = random_model(rng, 3, 6)
        for _ in range(100):
            c = int(rng.integers(3))
            x = rng.normal(scale=3.0, size=6)
            diff = x - model.means_[c]
            want = diff @ np.linalg.inv(model.covariances_[c]) @ diff
            assert model.mahalanobis_sq(c, x) == pytest.approx(want, rel=1e-8)
            assert model.mahalanobis_sq(c, x) >= 0.0

    def test_positive_away_from_mean(self):
        rng = np.random.default_rng(3)
        model = random_model(rng, 1, 3)
        x = model.means_[0] + 1e-3
        assert model.mahalanobis_sq(0, x) > 0.0


class TestMixgopRanking:
    def test_c1_isotropic_matches_negative_distance_ranking(self):
        rng = np.random.default_rng(0)
        model = random_model(rng, 1, 4)
        sigma_sq = 2.5
        model.covariances_[0] = sigma_sq * np.eye(4)
        model.cholesky_[0] = math.sqrt(sigma_sq) * np.eye(4)
        model.log_dets_[0] = 4 * math.log(sigma_sq)
        model.weights_[0] = 1.0
        X = rng.normal(scale=3.0, size=(1000, 4))
        lls = model.score_samples(X)
        neg_d2 = -np.sum((X - model.means_[0]) ** 2, axis=1)
        assert np.array_equal(np.argsort(lls), np.argsort(neg_d2))


class TestScoreAll:
    def test_single_segment_unit_gaussian(self):
        fs = make_feature_set(
            np.zeros((2, 2)), ["a", "a"], splits=["train", "test"]
        )
        model = PhonemeGmm(n_components=1)
        model.weights_ = np.array([1.0])
        model.means_ = np.zeros((1, 2))
        model.covariances_ = np.eye(2)[None]
        model.cholesky_ = np.eye(2)[None]
        model.log_dets_ = np.array([0.0])
        model.n_features_ = 2
        scores = score_rows_by_phoneme({"a": model}, fs, "test")
        assert scores[1] == pytest.approx(-1.837877, abs=1e-6)

    def test_duplicate_rows_identical_scores(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=3).astype(np.float32)
        fs = make_feature_set(
            np.vstack([x, x]), ["a", "a"], splits=["test", "test"]
        )
        train = make_feature_set(rng.normal(size=(30, 3)).astype(np.float32), ["a"] * 30)
        models = fit_phoneme_gmms(train, n_components=2, seed=0)
        scores = score_rows_by_phoneme(models, fs, "test")
        assert scores[0] == scores[1]

    def test_missing_model(self, small_fs):
        models = fit_phoneme_gmms(small_fs, n_components=2, seed=0)
        del models["b"]
        with pytest.raises(MissingModel):
            score_rows_by_phoneme(models, small_fs, "test")

    def test_shifted_scores_lower_on_average(self):
        rng = np.random.default_rng(2)
        train = make_feature_set(
            rng.normal(size=(400, 8)).astype(np.float32), ["a"] * 400
        )
        models = fit_phoneme_gmms(train, n_components=4, seed=0)
        in_dist = rng.normal(size=(100, 8))
        shifted = in_dist + 3.0
        s_in = models["a"].score_samples(in_dist)
        s_out = models["a"].score_samples(shifted)
        assert s_out.mean() < s_in.mean()


class TestSerialization:
    def test_round_trip_scores_match(self, tmp_path):
        rng = np.random.default_rng(0)
        train = make_feature_set(rng.normal(size=(200, 3)).astype(np.float32), ["a"] * 200)
        models = fit_phoneme_gmms(train, n_components=3, seed=0)
        path = tmp_path / "gmm_a.json"
        save_gmm(models["a"], "a", path)
        phoneme, loaded = load_gmm(path)
        assert phoneme == "a"
        X = rng.normal(size=(20, 3))
        # f32 storage rounds parameters; scores agree to f32 precision
        np.testing.assert_allclose(
            loaded.score_samples(X), models["a"].score_samples(X), rtol=1e-4, atol=1e-4
        )

    def test_save_is_deterministic(self, tmp_path, small_fs):
        models = fit_phoneme_gmms(small_fs, n_components=3, seed=0)
        save_gmm(models["a"], "a", tmp_path / "m1.json")
        models2 = fit_phoneme_gmms(small_fs, n_components=3, seed=0)
        save_gmm(models2["a"], "a", tmp_path / "m2.json")
        assert (tmp_path / "m1.bin").read_bytes() == (tmp_path / "m2.bin").read_bytes()


class TestPooledPipeline:
    def test_pooling_matches_manual_mean(self, small_fs):
        models = fit_phoneme_gmms(small_fs, n_components=2, seed=0)
        scores = score_rows_by_phoneme(models, small_fs, "test")
        table = build_score_table(small_fs, scores, "mixgop")
        pooled = pool_utterance(table)
        for utt, entries in table.by_utterance().items():
            manual = float(np.mean([e.score for e in entries]))
            assert pooled[utt] == pytest.approx(manual, abs=0)
