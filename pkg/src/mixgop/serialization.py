"""Shared artifact conventions: JSON headers next to raw f32 little-endian blobs.

Every on-disk matrix (features, model parameters) is stored row-major as
32-bit little-endian reals with no framing; the JSON header carries shapes,
the blob filename, and a CRC-32 of the blob. JSON is written canonically
(sorted keys, no whitespace) so identical inputs produce identical bytes.
"""

from __future__ import annotations

import json
import zlib
from pathlib import Path

import numpy as np

from .errors import ManifestParseError, ShapeMismatch

F32LE = np.dtype("<f4")


def pack_f32(*arrays: np.ndarray) -> bytes:
    """Concatenate arrays as row-major f32le bytes."""
    return b"".join(np.ascontiguousarray(a, dtype=F32LE).tobytes() for a in arrays)


def crc32_hex(blob: bytes) -> str:
    return format(zlib.crc32(blob) & 0xFFFFFFFF, "08x")


def dump_json(obj, path: Path | str) -> None:
    Path(path).write_text(
        json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8",
    )


def load_json(path: Path | str) -> dict:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestParseError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise ManifestParseError(f"{path}: top-level JSON must be an object")
    return obj


def write_header_blob(header_path: Path | str, header: dict, blob: bytes) -> None:
    """Write `header` JSON plus its sibling blob, filling blob name and checksum."""
    header_path = Path(header_path)
    blob_path = header_path.with_suffix(".bin")
    blob_path.write_bytes(blob)
    header = dict(header)
    header["blob"] = blob_path.name
    header["crc32"] = crc32_hex(blob)
    dump_json(header, header_path)


def read_header_blob(header_path: Path | str) -> tuple[dict, bytes]:
    """Read a JSON header and its blob, verifying the recorded checksum."""
    header_path = Path(header_path)
    header = load_json(header_path)
    for key in ("blob", "crc32"):
        if key not in header:
            raise ManifestParseError(f"{header_path}: missing '{key}' field")
    blob_path = header_path.parent / header["blob"]
    if not blob_path.exists():
        raise ManifestParseError(f"{header_path}: blob {blob_path} not found")
    blob = blob_path.read_bytes()
    if crc32_hex(blob) != header["crc32"]:
        raise ManifestParseError(
            f"{header_path}: blob checksum {crc32_hex(blob)} != recorded {header['crc32']}"
        )
    return header, blob


def unpack_f32(blob: bytes, offset: int, shape: tuple[int, ...]) -> tuple[np.ndarray, int]:
    """Read one row-major f32le array out of `blob` starting at `offset`."""
    count = int(np.prod(shape)) if shape else 1
    nbytes = count * 4
    if offset + nbytes > len(blob):
        raise ShapeMismatch(
            f"blob too short: need {offset + nbytes} bytes, have {len(blob)}"
        )
    arr = np.frombuffer(blob, dtype=F32LE, count=count, offset=offset)
    return arr.reshape(shape), offset + nbytes
