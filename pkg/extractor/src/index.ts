export { decodeWav, encodeWavPcm16, resample, durationSeconds } from "./wav.js";
export { fftRadix2, hannWindow, powerSpectrogram } from "./dsp.js";
export {
  hzToMel,
  melToHz,
  melFilterbank,
  melSpectrogram,
  powerToDb,
  dct2Ortho,
  mfcc,
  DEFAULT_MEL,
} from "./mel.js";
export { parseAlignments, AlignmentError } from "./alignments.js";
export {
  MANIFEST_FORMAT,
  BOUNDARY,
  canonicalJson,
  crc32Hex,
  packF32,
  writeManifest,
  readManifest,
  rewriteManifest,
} from "./manifest.js";
export {
  extractFeatures,
  midpointFrameIndex,
  AlignmentOutOfRange,
} from "./extract.js";
export {
  attachScores,
  attachSpeakerScores,
  attachScoreSplit,
  attachMispronunciationLabels,
  filterRecords,
  UnmatchedKey,
} from "./scores.js";
