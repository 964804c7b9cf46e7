/** Segment-level feature extraction: frame computation + center pooling.
 *
 * Each aligned phoneme segment is represented by the single frame at its
 * temporal midpoint: frame index floor(((start + end) / 2 - offset) / step),
 * where step is the encoder's frame step and offset its receptive-field
 * shift (zero for centered STFT features).
 */

import { existsSync, readFileSync } from "node:fs";
import * as path from "node:path";

import { AlignedSegment, parseAlignments } from "./alignments.js";
import { DEFAULT_MEL, melSpectrogram, mfcc } from "./mel.js";
import {
  BOUNDARY,
  SegmentRecordJson,
  writeManifest,
} from "./manifest.js";
import { decodeWav, durationSeconds, resample } from "./wav.js";

export class AlignmentOutOfRange extends Error {}

export interface EncoderSpec {
  kind: "mfcc" | "melspec" | "s3m";
  /** s3m only: layer to read from the frame dump. */
  layer?: number;
  /** s3m only: directory holding the frame-dump index. */
  framesIndex?: string;
}

export interface ExtractOptions {
  audioDir: string;
  alignmentsPath: string;
  outDir: string;
  encoder: EncoderSpec;
}

export interface ExtractResult {
  manifestPath: string;
  nSegments: number;
  skipped: { utteranceId: string; index: number; reason: string }[];
}

interface FrameSource {
  encoderTag: string;
  layerIndex: number;
  featureDim: number;
  frameStep: number;
  frameOffset: number;
  metadata: Record<string, unknown>;
  framesFor(utteranceId: string): { frames: Float64Array[]; duration: number };
}

const STFT_SAMPLE_RATE = 22050;

function stftSource(kind: "mfcc" | "melspec", audioDir: string): FrameSource {
  const opts = {
    ...DEFAULT_MEL,
    sampleRate: STFT_SAMPLE_RATE,
    fMax: STFT_SAMPLE_RATE / 2,
  };
  const nMfcc = 20;
  const frameStep = opts.hopLength / opts.sampleRate;
  return {
    encoderTag: kind,
    layerIndex: 0,
    featureDim: kind === "mfcc" ? nMfcc : opts.nMels,
    frameStep,
    frameOffset: 0,
    metadata: {
      sample_rate: opts.sampleRate,
      n_fft: opts.nFft,
      hop_length: opts.hopLength,
      n_mels: opts.nMels,
      ...(kind === "mfcc" ? { n_mfcc: nMfcc } : {}),
      frame_step_seconds: frameStep,
      pad_mode: "reflect",
      resampler: "linear",
    },
    framesFor(utteranceId: string) {
      const wavPath = path.join(audioDir, `${utteranceId}.wav`);
      if (!existsSync(wavPath)) {
        throw new Error(`missing audio file ${wavPath}`);
      }
      const audio = resample(decodeWav(readFileSync(wavPath)), opts.sampleRate);
      const frames =
        kind === "mfcc" ? mfcc(audio.samples, opts, nMfcc) : melSpectrogram(audio.samples, opts);
      return { frames, duration: durationSeconds(audio) };
    },
  };
}

interface FramesIndex {
  encoder: string;
  layer: number;
  feature_dim: number;
  frame_step_seconds: number;
  offset_seconds: number;
  utterances: Record<string, { file: string; n_frames: number; duration_seconds: number }>;
}

/** Precomputed layerwise frame dumps (f32le, n_frames x dim) for frozen
 * pretrained encoders; inference itself happens upstream. */
function s3mSource(indexPath: string, layer: number): FrameSource {
  const index = JSON.parse(readFileSync(indexPath, "utf-8")) as FramesIndex;
  if (index.layer !== layer) {
    throw new Error(
      `frame dump ${indexPath} holds layer ${index.layer}, requested ${layer}`,
    );
  }
  const baseDir = path.dirname(indexPath);
  return {
    encoderTag: `${index.encoder}/L${index.layer}`,
    layerIndex: index.layer,
    featureDim: index.feature_dim,
    frameStep: index.frame_step_seconds,
    frameOffset: index.offset_seconds,
    metadata: {
      frame_step_seconds: index.frame_step_seconds,
      offset_seconds: index.offset_seconds,
      source_index: path.basename(indexPath),
    },
    framesFor(utteranceId: string) {
      const entry = index.utterances[utteranceId];
      if (!entry) throw new Error(`no frame dump for utterance ${utteranceId}`);
      const raw = readFileSync(path.join(baseDir, entry.file));
      const dim = index.feature_dim;
      if (raw.length !== entry.n_frames * dim * 4) {
        throw new Error(`frame dump for ${utteranceId} has wrong size`);
      }
      const frames: Float64Array[] = [];
      for (let f = 0; f < entry.n_frames; f++) {
        const row = new Float64Array(dim);
        for (let j = 0; j < dim; j++) row[j] = raw.readFloatLE((f * dim + j) * 4);
        frames.push(row);
      }
      return { frames, duration: entry.duration_seconds };
    },
  };
}

export function midpointFrameIndex(
  start: number, end: number, frameStep: number, frameOffset = 0,
): number {
  return Math.floor(((start + end) / 2 - frameOffset) / frameStep);
}

function contextOf(
  segments: AlignedSegment[], i: number,
): { prev: string; next: string } {
  const seg = segments[i];
  const prev =
    i === 0 || seg.wordInitial ? BOUNDARY : segments[i - 1].phoneme;
  const next =
    i === segments.length - 1 || seg.wordFinal ? BOUNDARY : segments[i + 1].phoneme;
  return { prev, next };
}

export function extractFeatures(options: ExtractOptions): ExtractResult {
  const { encoder } = options;
  const source =
    encoder.kind === "s3m"
      ? s3mSource(encoder.framesIndex!, encoder.layer ?? 0)
      : stftSource(encoder.kind, options.audioDir);

  const alignments = parseAlignments(options.alignmentsPath);
  const inventory = new Set<string>();
  for (const segments of alignments.values()) {
    for (const seg of segments) inventory.add(seg.phoneme);
  }

  const rows: Float64Array[] = [];
  const records: SegmentRecordJson[] = [];
  const skipped: ExtractResult["skipped"] = [];
  const utteranceIds = [...alignments.keys()].sort();
  for (const utteranceId of utteranceIds) {
    const segments = alignments.get(utteranceId)!;
    const { frames, duration } = source.framesFor(utteranceId);
    for (let i = 0; i < segments.length; i++) {
      const seg = segments[i];
      if (seg.end > duration + 1e-9) {
        throw new AlignmentOutOfRange(
          `utterance ${utteranceId}: segment [${seg.start}, ${seg.end}] ` +
          `exceeds audio duration ${duration.toFixed(3)}`,
        );
      }
      const frame = midpointFrameIndex(
        seg.start, seg.end, source.frameStep, source.frameOffset,
      );
      if (seg.end <= seg.start || frame < 0 || frame >= frames.length) {
        skipped.push({
          utteranceId,
          index: i,
          reason: seg.end <= seg.start ? "empty segment" : "no frame at midpoint",
        });
        continue;
      }
      const { prev, next } = contextOf(segments, i);
      records.push({
        row_index: rows.length,
        utterance_id: utteranceId,
        speaker_id: seg.speakerId,
        phoneme: seg.phoneme,
        prev_phoneme: prev,
        next_phoneme: next,
        split: "train",
        utterance_score: null,
        segment_label: null,
      });
      rows.push(frames[frame]);
    }
  }

  const tagSlug = source.encoderTag.replace(/[^A-Za-z0-9_-]+/g, "_");
  const manifestPath = path.join(
    options.outDir, `features_${tagSlug}_L${source.layerIndex}.json`,
  );
  writeManifest(
    manifestPath,
    {
      feature_dim: source.featureDim,
      encoder_tag: source.encoderTag,
      layer_index: source.layerIndex,
      inventory: [...inventory].sort(),
      records,
      metadata: source.metadata,
    },
    rows,
  );
  return { manifestPath, nSegments: rows.length, skipped };
}
