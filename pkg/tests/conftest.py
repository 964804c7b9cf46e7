"""Shared synthetic-data builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from mixgop.feature_store import BOUNDARY, FeatureSet, SegmentRecord


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if report.when == "call" and "test_acceptance" in report.nodeid:
        outcome = "PASS" if report.passed else "FAIL"
        name = report.nodeid.split("::")[-1].removeprefix("test_")
        print(f"[acceptance] {outcome}: {name}")


def make_feature_set(
    matrix,
    phonemes,
    splits=None,
    utterance_ids=None,
    speaker_ids=None,
    prev_phonemes=None,
    next_phonemes=None,
    utterance_scores=None,
    segment_labels=None,
    inventory=None,
    encoder_tag="synthetic/L0",
    layer_index=0,
) -> FeatureSet:
    """Assemble a FeatureSet from parallel per-row lists with defaults."""
    matrix = np.asarray(matrix, dtype=np.float32)
    n = matrix.shape[0]
    phonemes = list(phonemes)
    splits = list(splits) if splits is not None else ["train"] * n
    utterance_ids = (
        list(utterance_ids) if utterance_ids is not None else [f"u{i}" for i in range(n)]
    )
    speaker_ids = (
        list(speaker_ids) if speaker_ids is not None else ["spk0"] * n
    )
    prev_phonemes = (
        list(prev_phonemes) if prev_phonemes is not None else [BOUNDARY] * n
    )
    next_phonemes = (
        list(next_phonemes) if next_phonemes is not None else [BOUNDARY] * n
    )
    utterance_scores = (
        list(utterance_scores) if utterance_scores is not None else [None] * n
    )
    segment_labels = (
        list(segment_labels) if segment_labels is not None else [None] * n
    )
    if inventory is None:
        inventory = tuple(sorted(set(phonemes)))
    records = [
        SegmentRecord(
            row_index=i,
            utterance_id=utterance_ids[i],
            speaker_id=speaker_ids[i],
            phoneme=phonemes[i],
            prev_phoneme=prev_phonemes[i],
            next_phoneme=next_phonemes[i],
            split=splits[i],
            utterance_score=utterance_scores[i],
            segment_label=segment_labels[i],
        )
        for i in range(n)
    ]
    return FeatureSet(
        matrix=matrix,
        records=records,
        feature_dim=matrix.shape[1],
        encoder_tag=encoder_tag,
        layer_index=layer_index,
        inventory=tuple(inventory),
    )


def planted_ood_feature_set(
    seed=0,
    n_phonemes=10,
    dim=16,
    train_per_phoneme=200,
    n_utterances=40,
    segments_per_utterance=20,
    max_shift_sigmas=3.0,
):
    """Synthetic dataset with known atypicality structure.

    Train rows are drawn from per-phoneme two-component mixtures (unit
    component variance). Test utterances carry a severity in [0, max];
    their features are mean-shifted by severity-many per-dimension
    standard deviations in every dimension, and utterance_score records
    the severity. Returns (feature_set, severity_by_utterance).
    """
    rng = np.random.default_rng(seed)
    phonemes = [f"p{i}" for i in range(n_phonemes)]
    centers = {p: rng.normal(scale=6.0, size=(2, dim)) for p in phonemes}

    def draw(phoneme, count):
        comps = rng.integers(2, size=count)
        return centers[phoneme][comps] + rng.normal(size=(count, dim))

    rows, phon, splits, utts, scores = [], [], [], [], []
    for p in phonemes:
        X = draw(p, train_per_phoneme)
        for i in range(train_per_phoneme):
            rows.append(X[i])
            phon.append(p)
            splits.append("train")
            utts.append(f"train_{p}_{i}")
            scores.append(None)

    severities = np.linspace(0.0, max_shift_sigmas, n_utterances)
    severity_by_utt = {}
    for u, severity in enumerate(severities):
        utt = f"test_u{u:03d}"
        severity_by_utt[utt] = float(severity)
        chosen = rng.choice(n_phonemes, size=segments_per_utterance)
        for c in chosen:
            p = phonemes[c]
            x = draw(p, 1)[0] + severity
            rows.append(x)
            phon.append(p)
            splits.append("test")
            utts.append(utt)
            scores.append(float(severity))

    fs = make_feature_set(
        np.asarray(rows, dtype=np.float32),
        phon,
        splits=splits,
        utterance_ids=utts,
        utterance_scores=scores,
        inventory=tuple(phonemes),
    )
    return fs, severity_by_utt


@pytest.fixture
def small_fs():
    """Tiny two-phoneme set with train and test rows."""
    rng = np.random.default_rng(7)
    X = rng.normal(size=(20, 3)).astype(np.float32)
    phonemes = ["a"] * 10 + ["b"] * 10
    splits = (["train"] * 7 + ["test"] * 3) * 2
    return make_feature_set(X, phonemes, splits=splits)
