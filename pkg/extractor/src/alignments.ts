/** Phoneme alignment files: CSV parsing and interval validation. */

import { readFileSync } from "node:fs";

export interface AlignedSegment {
  utteranceId: string;
  speakerId: string;
  phoneme: string;
  start: number;
  end: number;
  wordInitial: boolean;
  wordFinal: boolean;
}

export class AlignmentError extends Error {}

const HEADER = ["utterance_id", "speaker_id", "phoneme", "start", "end", "word_initial", "word_final"];

/** Minimal CSV split; alignment fields never contain commas or quotes. */
function splitCsvLine(line: string): string[] {
  return line.split(",").map((s) => s.trim());
}

/**
 * Parse `utterance_id,speaker_id,phoneme,start,end,word_initial,word_final`
 * rows into per-utterance segment lists. Within an utterance, intervals
 * must be monotonically increasing and non-overlapping.
 */
export function parseAlignments(path: string): Map<string, AlignedSegment[]> {
  const text = readFileSync(path, "utf-8");
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) throw new AlignmentError(`${path}: empty alignment file`);
  const header = splitCsvLine(lines[0]);
  if (JSON.stringify(header) !== JSON.stringify(HEADER)) {
    throw new AlignmentError(
      `${path}: expected header ${HEADER.join(",")}, got ${lines[0]}`,
    );
  }
  const byUtterance = new Map<string, AlignedSegment[]>();
  for (let i = 1; i < lines.length; i++) {
    const cols = splitCsvLine(lines[i]);
    if (cols.length !== HEADER.length) {
      throw new AlignmentError(`${path}:${i + 1}: expected ${HEADER.length} columns`);
    }
    const seg: AlignedSegment = {
      utteranceId: cols[0],
      speakerId: cols[1],
      phoneme: cols[2],
      start: Number(cols[3]),
      end: Number(cols[4]),
      wordInitial: cols[5] === "1",
      wordFinal: cols[6] === "1",
    };
    if (!Number.isFinite(seg.start) || !Number.isFinite(seg.end)) {
      throw new AlignmentError(`${path}:${i + 1}: non-numeric interval`);
    }
    if (seg.start < 0 || seg.end < seg.start) {
      throw new AlignmentError(
        `${path}:${i + 1}: invalid interval [${seg.start}, ${seg.end}]`,
      );
    }
    const list = byUtterance.get(seg.utteranceId) ?? [];
    list.push(seg);
    byUtterance.set(seg.utteranceId, list);
  }
  for (const [utt, segments] of byUtterance) {
    for (let i = 1; i < segments.length; i++) {
      if (segments[i].start < segments[i - 1].end) {
        throw new AlignmentError(
          `utterance ${utt}: overlapping or out-of-order intervals at index ${i}`,
        );
      }
    }
  }
  return byUtterance;
}
