#!/usr/bin/env node
/** CLI: `extract` audio + alignments into manifest/blob feature files, and
 * `attach-scores` to fill ground truth and splits. */

import { mkdirSync } from "node:fs";
import { parseArgs } from "node:util";

import { extractFeatures } from "./extract.js";
import { readManifest, rewriteManifest } from "./manifest.js";
import { AttachMode, attachScores } from "./scores.js";

function usage(): never {
  console.error(
    [
      "usage:",
      "  extract --encoder mfcc|melspec|s3m --audio-dir DIR --alignments FILE --out DIR",
      "          [--layer N --frames-index FILE]   (s3m reads precomputed frame dumps)",
      "  attach-scores --manifest FILE --scores FILE --out FILE",
      "          --mode speaker|score-split|mispronunciation [--train-min-score N]",
    ].join("\n"),
  );
  process.exit(1);
}

export function main(argv: string[]): number {
  const command = argv[0];
  if (command === "extract") {
    const { values } = parseArgs({
      args: argv.slice(1),
      options: {
        encoder: { type: "string" },
        "audio-dir": { type: "string" },
        alignments: { type: "string" },
        out: { type: "string" },
        layer: { type: "string" },
        "frames-index": { type: "string" },
      },
    });
    const kind = values.encoder;
    if (
      (kind !== "mfcc" && kind !== "melspec" && kind !== "s3m") ||
      !values["audio-dir"] || !values.alignments || !values.out
    ) {
      usage();
    }
    if (kind === "s3m" && !values["frames-index"]) {
      console.error("s3m extraction needs --frames-index (precomputed frame dumps)");
      return 1;
    }
    mkdirSync(values.out, { recursive: true });
    const result = extractFeatures({
      audioDir: values["audio-dir"],
      alignmentsPath: values.alignments,
      outDir: values.out,
      encoder: {
        kind,
        layer: values.layer ? Number(values.layer) : undefined,
        framesIndex: values["frames-index"],
      },
    });
    for (const skip of result.skipped) {
      console.error(
        `skipped ${skip.utteranceId}[${skip.index}]: ${skip.reason}`,
      );
    }
    console.log(JSON.stringify({
      manifest: result.manifestPath,
      segments: result.nSegments,
      skipped: result.skipped.length,
    }));
    return 0;
  }

  if (command === "attach-scores") {
    const { values } = parseArgs({
      args: argv.slice(1),
      options: {
        manifest: { type: "string" },
        scores: { type: "string" },
        out: { type: "string" },
        mode: { type: "string" },
        "train-min-score": { type: "string" },
      },
    });
    const mode = values.mode as AttachMode;
    if (
      !values.manifest || !values.scores || !values.out ||
      !["speaker", "score-split", "mispronunciation"].includes(mode)
    ) {
      usage();
    }
    const loaded = readManifest(values.manifest);
    attachScores(
      loaded, values.scores, mode,
      values["train-min-score"] ? Number(values["train-min-score"]) : 9,
    );
    rewriteManifest(values.out, loaded);
    console.log(JSON.stringify({ manifest: values.out, records: loaded.manifest.records.length }));
    return 0;
  }

  usage();
}

if (import.meta.url === `file://${process.argv[1]}`) {
  try {
    process.exit(main(process.argv.slice(2)));
  } catch (err) {
    console.error(JSON.stringify({ error: (err as Error).constructor.name, message: (err as Error).message }));
    process.exit(2);
  }
}
