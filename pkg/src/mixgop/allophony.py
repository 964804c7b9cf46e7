"""Allophonic-structure quantification.

Each phoneme's features are clustered with k-means; each segment's phonetic
environment is the natural class of its neighbors (or the boundary marker).
The mutual information between cluster indices and environments, normalized
by the environment entropy, measures how much of the sub-phonemic cluster
structure is explained by the environment. Per-phoneme values are pooled by
segment-count-weighted averaging.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import log

import numpy as np

from .errors import DegenerateEnvironments, DimensionMismatch
from .feature_store import (
    BOUNDARY,
    FeatureSet,
    PhonemeInventory,
    SegmentRecord,
    group_by_phoneme,
)
from .gmm import kmeans_init


@dataclass(frozen=True, order=True)
class EnvironmentLabel:
    """Natural classes of the preceding and following context."""

    prev_class: str
    next_class: str

    def __str__(self) -> str:
        return f"{self.prev_class}|{self.next_class}"


@dataclass(frozen=True)
class ClusterAssignment:
    phoneme: str
    row_index: int
    cluster_index: int


def encode_environment(
    rec: SegmentRecord, inventory: PhonemeInventory
) -> EnvironmentLabel:
    """Map a record's neighbors to natural classes; '#' passes through."""
    return EnvironmentLabel(
        prev_class=inventory.class_of(rec.prev_phoneme),
        next_class=inventory.class_of(rec.next_phoneme),
    )


def cluster_phoneme(X, k: int = 32, seed=0) -> np.ndarray:
    """k-means cluster indices for one phoneme's rows; k shrinks to the
    row count when the phoneme is scarce."""
    X = np.asarray(X, dtype=np.float64)
    k_eff = min(k, X.shape[0])
    _, labels = kmeans_init(X, k_eff, seed)
    return labels


def entropy(labels) -> float:
    """Plug-in entropy in nats."""
    values, counts = _count(labels)
    n = sum(counts.values())
    return -sum(
        (counts[v] / n) * log(counts[v] / n) for v in values
    )


def _count(labels):
    counts: dict = {}
    for item in labels:
        counts[item] = counts.get(item, 0) + 1
    return sorted(counts), counts


def mutual_information(a, b) -> tuple[float, float]:
    """Plug-in MI(a; b) and H(b), in nats.

    The MI sum iterates joint cells ordered by the b label first, so when a
    is a relabeling of b the terms align with the entropy sum and the ratio
    MI/H(b) is exactly 1.
    """
    if len(a) != len(b):
        raise DimensionMismatch("label lists must be aligned")
    n = len(a)
    joint: dict = {}
    marg_a: dict = {}
    marg_b: dict = {}
    for x, y in zip(a, b):
        joint[(y, x)] = joint.get((y, x), 0) + 1
        marg_a[x] = marg_a.get(x, 0) + 1
        marg_b[y] = marg_b.get(y, 0) + 1
    h_b = -sum((marg_b[y] / n) * log(marg_b[y] / n) for y in sorted(marg_b))
    mi = 0.0
    for y, x in sorted(joint):
        p_xy = joint[(y, x)] / n
        mi += p_xy * (log(p_xy) - log(marg_a[x] / n) - log(marg_b[y] / n))
    return mi, h_b


def anmi(
    assignments: list[ClusterAssignment], envs: list[EnvironmentLabel]
) -> float:
    """Environment-normalized mutual information, pooled across phonemes.

    Computes MI(I; E)/H(E) per phoneme and aggregates by segment-count-
    weighted average. Phonemes whose environments are all identical carry
    no normalizer and are excluded; if every phoneme is degenerate the
    metric is undefined.
    """
    per_phoneme = anmi_by_phoneme(assignments, envs)
    weighted = 0.0
    total = 0
    for n_p, value in per_phoneme.values():
        if value is None:
            continue
        weighted += n_p * value
        total += n_p
    if total == 0:
        raise DegenerateEnvironments("all environments identical: H(E) = 0")
    return weighted / total


def anmi_by_phoneme(
    assignments: list[ClusterAssignment], envs: list[EnvironmentLabel]
) -> dict[str, tuple[int, float | None]]:
    """Phoneme -> (segment count, MI/H or None when H(E) is zero)."""
    if len(assignments) != len(envs):
        raise DimensionMismatch("assignments and environments must be aligned")
    by_phoneme: dict[str, tuple[list, list]] = {}
    for a, e in zip(assignments, envs):
        clusters, environments = by_phoneme.setdefault(a.phoneme, ([], []))
        clusters.append(a.cluster_index)
        environments.append(e)
    out: dict[str, tuple[int, float | None]] = {}
    for phoneme in sorted(by_phoneme):
        clusters, environments = by_phoneme[phoneme]
        mi, h_env = mutual_information(clusters, environments)
        if h_env == 0.0:
            out[phoneme] = (len(clusters), None)
            continue
        value = mi / h_env
        # plug-in MI is bounded by H(E); allow only rounding slack
        assert -1e-9 <= value <= 1.0 + 1e-9, f"ANMI {value} outside [0, 1]"
        out[phoneme] = (len(clusters), value)
    return out


def environment_labels(
    fs: FeatureSet, inventory: PhonemeInventory, rows
) -> list[EnvironmentLabel]:
    return [encode_environment(fs.record_by_row(r), inventory) for r in rows]


def analyze_allophony(
    fs: FeatureSet,
    inventory: PhonemeInventory,
    k: int = 32,
    seed: int = 0,
    split: str = "train",
) -> tuple[list[ClusterAssignment], list[EnvironmentLabel]]:
    """Cluster every phoneme of `split` and encode its environments.

    Returns aligned assignment/environment lists ready for `anmi`. Splits
    may be "train", "test", or "all".
    """
    if split == "all":
        groups: dict[str, list[int]] = {}
        for part in ("train", "test"):
            for phoneme, rows in group_by_phoneme(fs, part).items():
                groups.setdefault(phoneme, []).extend(rows)
    else:
        groups = group_by_phoneme(fs, split)

    phonemes = sorted(groups)
    children = np.random.SeedSequence(seed).spawn(len(phonemes))
    assignments: list[ClusterAssignment] = []
    envs: list[EnvironmentLabel] = []
    for phoneme, child in zip(phonemes, children):
        rows = sorted(groups[phoneme])
        X = np.asarray(fs.matrix[rows], dtype=np.float64)
        labels = cluster_phoneme(X, k=k, seed=child)
        for row, cluster in zip(rows, labels):
            assignments.append(ClusterAssignment(phoneme, row, int(cluster)))
            envs.append(encode_environment(fs.record_by_row(row), inventory))
    return assignments, envs


__all__ = [
    "BOUNDARY",
    "EnvironmentLabel",
    "ClusterAssignment",
    "encode_environment",
    "cluster_phoneme",
    "entropy",
    "mutual_information",
    "anmi",
    "anmi_by_phoneme",
    "environment_labels",
    "analyze_allophony",
]
