/** Writer/reader for the portable manifest + f32le blob feature format. */

import { crc32 } from "node:zlib";
import { readFileSync, writeFileSync } from "node:fs";
import * as path from "node:path";

export const MANIFEST_FORMAT = "mixgop-features-v1";
export const BOUNDARY = "#";

export interface SegmentRecordJson {
  row_index: number;
  utterance_id: string;
  speaker_id: string;
  phoneme: string;
  prev_phoneme: string;
  next_phoneme: string;
  split: "train" | "test";
  utterance_score: number | null;
  segment_label: 0 | 1 | null;
}

export interface Manifest {
  format: string;
  feature_dim: number;
  encoder_tag: string;
  layer_index: number;
  inventory: string[];
  records: SegmentRecordJson[];
  blob: string;
  crc32: string;
  metadata?: Record<string, unknown>;
}

/** JSON with recursively sorted keys and no whitespace (canonical form). */
export function canonicalJson(value: unknown): string {
  if (value === null || typeof value !== "object") {
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return `[${value.map(canonicalJson).join(",")}]`;
  }
  const entries = Object.entries(value as Record<string, unknown>)
    .filter(([, v]) => v !== undefined)
    .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
    .map(([k, v]) => `${JSON.stringify(k)}:${canonicalJson(v)}`);
  return `{${entries.join(",")}}`;
}

export function crc32Hex(blob: Buffer): string {
  return (crc32(blob) >>> 0).toString(16).padStart(8, "0");
}

export function packF32(rows: Float64Array[] | Float32Array[]): Buffer {
  if (rows.length === 0) return Buffer.alloc(0);
  const dim = rows[0].length;
  const out = Buffer.alloc(rows.length * dim * 4);
  for (let i = 0; i < rows.length; i++) {
    if (rows[i].length !== dim) throw new Error("ragged feature rows");
    for (let j = 0; j < dim; j++) {
      out.writeFloatLE(Math.fround(rows[i][j]), (i * dim + j) * 4);
    }
  }
  return out;
}

export function writeManifest(
  manifestPath: string,
  header: Omit<Manifest, "blob" | "crc32" | "format">,
  rows: Float64Array[] | Float32Array[],
): void {
  const blob = packF32(rows);
  const blobPath = manifestPath.replace(/\.json$/, ".bin");
  writeFileSync(blobPath, blob);
  const manifest: Manifest = {
    format: MANIFEST_FORMAT,
    ...header,
    blob: path.basename(blobPath),
    crc32: crc32Hex(blob),
  };
  writeFileSync(manifestPath, canonicalJson(manifest) + "\n");
}

export interface LoadedManifest {
  manifest: Manifest;
  blob: Buffer;
}

export function readManifest(manifestPath: string): LoadedManifest {
  const manifest = JSON.parse(readFileSync(manifestPath, "utf-8")) as Manifest;
  const blobPath = path.join(path.dirname(manifestPath), manifest.blob);
  const blob = readFileSync(blobPath);
  if (crc32Hex(blob) !== manifest.crc32) {
    throw new Error(`${manifestPath}: blob checksum mismatch`);
  }
  const expected = manifest.records.length * manifest.feature_dim * 4;
  if (blob.length !== expected) {
    throw new Error(
      `${manifestPath}: blob has ${blob.length} bytes, expected ${expected}`,
    );
  }
  return { manifest, blob };
}

export function rewriteManifest(
  manifestPath: string, loaded: LoadedManifest,
): void {
  const blobPath = manifestPath.replace(/\.json$/, ".bin");
  writeFileSync(blobPath, loaded.blob);
  const manifest: Manifest = {
    ...loaded.manifest,
    blob: path.basename(blobPath),
    crc32: crc32Hex(loaded.blob),
  };
  writeFileSync(manifestPath, canonicalJson(manifest) + "\n");
}
