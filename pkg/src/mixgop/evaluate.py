"""Segment-score tables, utterance pooling, and rank-correlation evaluation.

Utterance scores are arithmetic means of their segments' scores. Agreement
with ground truth is measured by tie-corrected Kendall tau-b, computed by a
merge-sort (O(n log n)) inversion count. Ground-truth severity scales often
run opposite to our typicality scores, so reports carry both the signed and
the absolute correlation.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateInput,
    DimensionMismatch,
    EmptyUtterance,
    MissingGroundTruth,
    NonFiniteValue,
)
from .feature_store import FeatureSet

SCORE_COLUMNS = ("method_tag", "utterance_id", "segment_index", "phoneme", "score")
EVAL_LEVELS = ("utterance", "segment")


@dataclass(frozen=True)
class ScoreEntry:
    utterance_id: str
    phoneme: str
    segment_index: int
    score: float
    method_tag: str


@dataclass
class ScoreTable:
    """Per-segment scores from one or more methods.

    (utterance_id, segment_index, method_tag) is unique and scores are
    finite; both are enforced at construction.
    """

    entries: list[ScoreEntry] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            key = (e.utterance_id, e.segment_index, e.method_tag)
            if key in seen:
                raise ValueError(f"duplicate score entry {key}")
            seen.add(key)
            if not np.isfinite(e.score):
                raise NonFiniteValue(f"non-finite score for {key}")

    def __len__(self) -> int:
        return len(self.entries)

    def by_utterance(self) -> dict[str, list[ScoreEntry]]:
        out: dict[str, list[ScoreEntry]] = {}
        for e in self.entries:
            out.setdefault(e.utterance_id, []).append(e)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(SCORE_COLUMNS)
        for e in self.entries:
            writer.writerow(
                [e.method_tag, e.utterance_id, e.segment_index, e.phoneme,
                 repr(e.score)]
            )
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ScoreTable":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != SCORE_COLUMNS:
            raise ValueError(f"score CSV must start with header {SCORE_COLUMNS}")
        entries = [
            ScoreEntry(
                utterance_id=r[1],
                phoneme=r[3],
                segment_index=int(r[2]),
                score=float(r[4]),
                method_tag=r[0],
            )
            for r in rows[1:]
        ]
        return cls(entries)


def build_score_table(
    fs: FeatureSet, scores_by_row: dict[int, float], method_tag: str
) -> ScoreTable:
    """Wrap row-indexed scores into a table, in row order."""
    entries = [
        ScoreEntry(
            utterance_id=fs.record_by_row(row).utterance_id,
            phoneme=fs.record_by_row(row).phoneme,
            segment_index=row,
            score=float(score),
            method_tag=method_tag,
        )
        for row, score in sorted(scores_by_row.items())
    ]
    return ScoreTable(entries)


def pool_utterance(
    table: ScoreTable, utterance_ids=None
) -> dict[str, float]:
    """Mean segment score per utterance.

    If `utterance_ids` is given, every listed utterance must have at least
    one segment in the table.
    """
    groups = table.by_utterance()
    if utterance_ids is None:
        utterance_ids = sorted(groups)
    pooled = {}
    for utt in utterance_ids:
        if utt not in groups or not groups[utt]:
            raise EmptyUtterance(f"utterance {utt!r} has no segments to pool")
        pooled[utt] = float(np.mean([e.score for e in groups[utt]]))
    return pooled


# -- Kendall tau-b ---------------------------------------------------------


def _merge_count(values: list[float]) -> tuple[list[float], int]:
    """Sort and count strict inversions (i < j with v[i] > v[j])."""
    n = len(values)
    if n <= 1:
        return values, 0
    mid = n // 2
    left, inv_l = _merge_count(values[:mid])
    right, inv_r = _merge_count(values[mid:])
    merged = []
    inv = inv_l + inv_r
    i = j = 0
    while i < len(left) and j < len(right):
        if right[j] < left[i]:
            inv += len(left) - i
            merged.append(right[j])
            j += 1
        else:
            merged.append(left[i])
            i += 1
    merged.extend(left[i:])
    merged.extend(right[j:])
    return merged, inv


def _tie_pairs(sorted_keys) -> int:
    total = 0
    run = 1
    for a, b in zip(sorted_keys, sorted_keys[1:]):
        if a == b:
            run += 1
        else:
            total += run * (run - 1) // 2
            run = 1
    total += run * (run - 1) // 2
    return total


def kendall_tau(x, y) -> float:
    """Tie-corrected Kendall tau-b via merge-sort inversion counting.

    Raises DegenerateInput when either list is constant (tau undefined).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise DimensionMismatch("inputs must be 1-D and of equal length")
    n = x.shape[0]
    if n < 2:
        raise DimensionMismatch("need at least 2 observations")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateInput("constant input: tau is undefined")

    order = np.lexsort((y, x))
    xs = x[order]
    ys = y[order]
    n0 = n * (n - 1) // 2
    ties_x = _tie_pairs(xs.tolist())
    ties_y = _tie_pairs(np.sort(y).tolist())
    ties_xy = _tie_pairs(list(zip(xs.tolist(), ys.tolist())))
    _, swaps = _merge_count(ys.tolist())

    con_minus_dis = n0 - ties_x - ties_y + ties_xy - 2 * swaps
    denom = float(np.sqrt(float((n0 - ties_x) * (n0 - ties_y))))
    return con_minus_dis / denom


# -- evaluation reports ----------------------------------------------------

REPORT_COLUMNS = (
    "method_tag",
    "level",
    "encoder_tag",
    "layer_index",
    "n",
    "kendall_tau",
    "abs_kendall_tau",
)


@dataclass
class EvalReport:
    method_tag: str
    level: str
    kendall_tau: float
    n: int
    metadata: dict = field(default_factory=dict)

    @property
    def abs_kendall_tau(self) -> float:
        return abs(self.kendall_tau)

    def to_dict(self) -> dict:
        return {
            "method_tag": self.method_tag,
            "level": self.level,
            "kendall_tau": self.kendall_tau,
            "abs_kendall_tau": self.abs_kendall_tau,
            "n": self.n,
            "metadata": self.metadata,
        }

    def as_row(self) -> list:
        meta = self.metadata
        return [
            self.method_tag,
            self.level,
            meta.get("encoder_tag", ""),
            meta.get("layer_index", ""),
            self.n,
            repr(self.kendall_tau),
            repr(self.abs_kendall_tau),
        ]


def evaluate(table: ScoreTable, fs: FeatureSet, level: str) -> EvalReport:
    """Correlate scores with ground truth at utterance or segment level.

    Utterance level: tau between pooled scores and utterance_score.
    Segment level: tau between raw scores and the 0/1 mispronunciation label.
    Only annotated utterances/segments enter the correlation; the used count
    is reported as n.
    """
    if level not in EVAL_LEVELS:
        raise ValueError(f"level must be one of {EVAL_LEVELS}, got {level!r}")
    method_tags = sorted({e.method_tag for e in table.entries})
    if len(method_tags) != 1:
        raise ValueError(f"expected a single method_tag, got {method_tags}")

    if level == "utterance":
        truth = {
            r.utterance_id: r.utterance_score
            for r in fs.records
            if r.utterance_score is not None
        }
        pooled = pool_utterance(table)
        utts = sorted(u for u in pooled if u in truth)
        if not utts:
            raise MissingGroundTruth("no utterance_score ground truth available")
        predicted = [pooled[u] for u in utts]
        target = [truth[u] for u in utts]
        n = len(utts)
    else:
        predicted = []
        target = []
        for e in table.entries:
            label = fs.record_by_row(e.segment_index).segment_label
            if label is not None:
                predicted.append(e.score)
                target.append(float(label))
        if not predicted:
            raise MissingGroundTruth("no segment_label ground truth available")
        n = len(predicted)

    tau = kendall_tau(predicted, target)
    return EvalReport(
        method_tag=method_tags[0],
        level=level,
        kendall_tau=tau,
        n=n,
        metadata={"encoder_tag": fs.encoder_tag, "layer_index": fs.layer_index},
    )


__all__ = [
    "ScoreEntry",
    "ScoreTable",
    "EvalReport",
    "SCORE_COLUMNS",
    "REPORT_COLUMNS",
    "build_score_table",
    "pool_utterance",
    "kendall_tau",
    "evaluate",
]
