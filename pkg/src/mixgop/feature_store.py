"""Portable feature-file format: loading, validation, inventory, subsampling.

A dataset is a JSON manifest next to a raw f32le row-major blob. The manifest
holds per-row segment metadata (phoneme, context, split, ground truth) and the
phoneme inventory; the blob holds the N x F feature matrix. Loading validates
every declared invariant so no partially constructed set escapes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    ManifestParseError,
    NonFiniteValue,
    ShapeMismatch,
    UnknownPhoneme,
    UnknownSymbol,
)
from .serialization import (
    F32LE,
    dump_json,
    load_json,
    read_header_blob,
    write_header_blob,
)

BOUNDARY = "#"
SPLITS = ("train", "test")
MANIFEST_FORMAT = "mixgop-features-v1"


@dataclass(frozen=True)
class SegmentRecord:
    """Metadata for one phoneme segment (one feature row)."""

    row_index: int
    utterance_id: str
    speaker_id: str
    phoneme: str
    prev_phoneme: str
    next_phoneme: str
    split: str
    utterance_score: float | None = None
    segment_label: int | None = None

    def to_dict(self) -> dict:
        return {
            "row_index": self.row_index,
            "utterance_id": self.utterance_id,
            "speaker_id": self.speaker_id,
            "phoneme": self.phoneme,
            "prev_phoneme": self.prev_phoneme,
            "next_phoneme": self.next_phoneme,
            "split": self.split,
            "utterance_score": self.utterance_score,
            "segment_label": self.segment_label,
        }


@dataclass(frozen=True)
class PhonemeInventory:
    """Ordered phoneme symbols plus their natural-class descriptors."""

    symbols: tuple[str, ...]
    natural_class: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise ManifestParseError("inventory symbols are not unique")

    def index(self, symbol: str) -> int:
        try:
            return self.symbols.index(symbol)
        except ValueError:
            raise UnknownPhoneme(f"phoneme {symbol!r} not in inventory") from None

    def class_of(self, symbol: str) -> str:
        """Natural class of `symbol`; the boundary marker passes through."""
        if symbol == BOUNDARY:
            return BOUNDARY
        try:
            return self.natural_class[symbol]
        except KeyError:
            raise UnknownSymbol(
                f"no natural-class entry for symbol {symbol!r}"
            ) from None

    @classmethod
    def with_classes(cls, symbols, class_table: dict[str, str]) -> "PhonemeInventory":
        missing = [s for s in symbols if s not in class_table]
        if missing:
            raise UnknownSymbol(f"symbols missing from class table: {missing}")
        return cls(tuple(symbols), {s: class_table[s] for s in symbols})


@dataclass
class FeatureSet:
    """Validated N x F feature matrix with per-row segment metadata."""

    matrix: np.ndarray
    records: list[SegmentRecord]
    feature_dim: int
    encoder_tag: str
    layer_index: int
    inventory: tuple[str, ...]

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    def rows_for_split(self, split: str) -> list[int]:
        _check_split(split)
        return [r.row_index for r in self.records if r.split == split]

    def record_by_row(self, row_index: int) -> SegmentRecord:
        return self._row_map[row_index]

    def __post_init__(self):
        self.matrix = np.ascontiguousarray(self.matrix, dtype=F32LE)
        _validate_feature_set(self)
        self._row_map = {r.row_index: r for r in self.records}


def _check_split(split: str) -> None:
    if split not in SPLITS:
        raise ManifestParseError(f"split must be one of {SPLITS}, got {split!r}")


def _validate_feature_set(fs: FeatureSet) -> None:
    n, f = fs.matrix.shape
    if len(fs.records) != n:
        raise ShapeMismatch(
            f"{len(fs.records)} records but {n} matrix rows"
        )
    if f != fs.feature_dim:
        raise ShapeMismatch(
            f"matrix has {f} columns but feature_dim={fs.feature_dim}"
        )
    if not np.all(np.isfinite(fs.matrix)):
        raise NonFiniteValue("feature matrix contains NaN or Inf")

    inventory = set(fs.inventory)
    context = inventory | {BOUNDARY}
    seen_rows: set[int] = set()
    utterance_scores: dict[str, float | None] = {}
    for rec in fs.records:
        if not 0 <= rec.row_index < n or rec.row_index in seen_rows:
            raise ManifestParseError(
                f"row_index {rec.row_index} is out of range or duplicated"
            )
        seen_rows.add(rec.row_index)
        if rec.phoneme not in inventory:
            raise UnknownPhoneme(f"phoneme {rec.phoneme!r} not in inventory")
        if rec.prev_phoneme not in context or rec.next_phoneme not in context:
            raise UnknownPhoneme(
                f"context {rec.prev_phoneme!r}/{rec.next_phoneme!r} not in "
                f"inventory or {BOUNDARY!r}"
            )
        _check_split(rec.split)
        if rec.segment_label not in (None, 0, 1):
            raise ManifestParseError(
                f"segment_label must be 0, 1, or null, got {rec.segment_label!r}"
            )
        if rec.utterance_id in utterance_scores:
            if utterance_scores[rec.utterance_id] != rec.utterance_score:
                raise ManifestParseError(
                    f"utterance {rec.utterance_id!r} has inconsistent scores"
                )
        else:
            utterance_scores[rec.utterance_id] = rec.utterance_score


def _record_from_dict(d: dict, i: int) -> SegmentRecord:
    try:
        score = d.get("utterance_score")
        label = d.get("segment_label")
        return SegmentRecord(
            row_index=int(d["row_index"]),
            utterance_id=str(d["utterance_id"]),
            speaker_id=str(d["speaker_id"]),
            phoneme=str(d["phoneme"]),
            prev_phoneme=str(d["prev_phoneme"]),
            next_phoneme=str(d["next_phoneme"]),
            split=str(d["split"]),
            utterance_score=None if score is None else float(score),
            segment_label=None if label is None else int(label),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestParseError(f"record {i} is malformed: {exc}") from exc


def load_feature_set(manifest_path: str | Path) -> FeatureSet:
    """Load and validate a manifest + blob pair.

    Raises ManifestParseError, ShapeMismatch, UnknownPhoneme, or
    NonFiniteValue; never returns a partially validated set.
    """
    manifest_path = Path(manifest_path)
    header, blob = read_header_blob(manifest_path)
    for key in ("format", "feature_dim", "encoder_tag", "layer_index",
                "inventory", "records"):
        if key not in header:
            raise ManifestParseError(f"{manifest_path}: missing '{key}' field")
    if header["format"] != MANIFEST_FORMAT:
        raise ManifestParseError(
            f"{manifest_path}: unsupported format {header['format']!r}"
        )
    feature_dim = int(header["feature_dim"])
    if feature_dim <= 0:
        raise ManifestParseError(f"{manifest_path}: feature_dim must be positive")
    records = [_record_from_dict(d, i) for i, d in enumerate(header["records"])]
    n = len(records)
    if len(blob) != n * feature_dim * 4:
        raise ShapeMismatch(
            f"{manifest_path}: blob has {len(blob)} bytes, "
            f"expected {n * feature_dim * 4} for {n}x{feature_dim} f32"
        )
    matrix = np.frombuffer(blob, dtype=F32LE).reshape(n, feature_dim)
    return FeatureSet(
        matrix=matrix,
        records=records,
        feature_dim=feature_dim,
        encoder_tag=str(header["encoder_tag"]),
        layer_index=int(header["layer_index"]),
        inventory=tuple(header["inventory"]),
    )


def write_feature_set(fs: FeatureSet, manifest_path: str | Path) -> None:
    """Write the manifest + blob pair; round-trips bit-exactly."""
    header = {
        "format": MANIFEST_FORMAT,
        "feature_dim": fs.feature_dim,
        "encoder_tag": fs.encoder_tag,
        "layer_index": fs.layer_index,
        "inventory": list(fs.inventory),
        "records": [r.to_dict() for r in sorted(fs.records, key=lambda r: r.row_index)],
    }
    blob = np.ascontiguousarray(fs.matrix, dtype=F32LE).tobytes()
    write_header_blob(Path(manifest_path), header, blob)


def subsample_per_phoneme(fs: FeatureSet, max_per_phoneme: int, seed: int) -> FeatureSet:
    """Cap each phoneme's train rows at `max_per_phoneme`, uniformly without
    replacement. Test rows always pass through. Deterministic given `seed`,
    and idempotent when re-applied with the same cap."""
    if max_per_phoneme < 1:
        raise ValueError("max_per_phoneme must be >= 1")
    rng = np.random.default_rng(seed)
    by_phoneme: dict[str, list[int]] = {}
    for rec in fs.records:
        if rec.split == "train":
            by_phoneme.setdefault(rec.phoneme, []).append(rec.row_index)

    keep = set(fs.rows_for_split("test"))
    for phoneme in sorted(by_phoneme):
        rows = by_phoneme[phoneme]
        if len(rows) <= max_per_phoneme:
            keep.update(rows)
        else:
            chosen = rng.choice(len(rows), size=max_per_phoneme, replace=False)
            keep.update(rows[i] for i in chosen)

    kept_rows = sorted(keep)
    row_of = {old: new for new, old in enumerate(kept_rows)}
    records = [
        replace(fs.record_by_row(old), row_index=row_of[old]) for old in kept_rows
    ]
    return FeatureSet(
        matrix=fs.matrix[kept_rows],
        records=records,
        feature_dim=fs.feature_dim,
        encoder_tag=fs.encoder_tag,
        layer_index=fs.layer_index,
        inventory=fs.inventory,
    )


def group_by_phoneme(fs: FeatureSet, split: str) -> dict[str, list[int]]:
    """Row indices of `split`, grouped by phoneme. Groups partition the split."""
    _check_split(split)
    groups: dict[str, list[int]] = {}
    for rec in fs.records:
        if rec.split == split:
            groups.setdefault(rec.phoneme, []).append(rec.row_index)
    return groups


def load_natural_classes(path: str | Path | None = None) -> dict[str, str]:
    """Load a `symbol,class_string` CSV; defaults to the bundled ARPABET table."""
    if path is None:
        ref = resources.files("mixgop.data") / "arpabet_natural_classes.csv"
        text = ref.read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    table: dict[str, str] = {}
    for i, row in enumerate(csv.reader(text.splitlines())):
        if not row or row[0].startswith("#"):
            continue
        if row[0] == "symbol":  # header line
            continue
        if len(row) != 2:
            raise ManifestParseError(f"class table line {i + 1}: expected 2 columns")
        table[row[0].strip()] = row[1].strip()
    return table


def dump_manifest_summary(fs: FeatureSet) -> dict:
    """Small JSON-able summary used by the CLI after validation."""
    counts: dict[str, int] = {}
    for rec in fs.records:
        counts[rec.split] = counts.get(rec.split, 0) + 1
    return {
        "rows": fs.n_rows,
        "feature_dim": fs.feature_dim,
        "encoder_tag": fs.encoder_tag,
        "layer_index": fs.layer_index,
        "inventory_size": len(fs.inventory),
        "split_counts": counts,
    }


__all__ = [
    "BOUNDARY",
    "SPLITS",
    "SegmentRecord",
    "PhonemeInventory",
    "FeatureSet",
    "load_feature_set",
    "write_feature_set",
    "subsample_per_phoneme",
    "group_by_phoneme",
    "load_natural_classes",
    "dump_json",
    "dump_manifest_summary",
]
