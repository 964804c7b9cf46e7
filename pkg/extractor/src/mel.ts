/** Mel filterbank (Slaney scale and normalization), Mel spectrogram, MFCC. */

import { powerSpectrogram } from "./dsp.js";

const F_SP = 200.0 / 3.0;
const MIN_LOG_HZ = 1000.0;
const MIN_LOG_MEL = MIN_LOG_HZ / F_SP;
const LOG_STEP = Math.log(6.4) / 27.0;

export function hzToMel(hz: number): number {
  return hz < MIN_LOG_HZ ? hz / F_SP : MIN_LOG_MEL + Math.log(hz / MIN_LOG_HZ) / LOG_STEP;
}

export function melToHz(mel: number): number {
  return mel < MIN_LOG_MEL ? mel * F_SP : MIN_LOG_HZ * Math.exp(LOG_STEP * (mel - MIN_LOG_MEL));
}

export interface MelOptions {
  sampleRate: number;
  nFft: number;
  hopLength: number;
  nMels: number;
  fMin: number;
  fMax: number;
}

export const DEFAULT_MEL: Omit<MelOptions, "sampleRate" | "fMax"> = {
  nFft: 2048,
  hopLength: 512,
  nMels: 128,
  fMin: 0.0,
};

/** Triangular mel filters with Slaney area normalization, nMels x (nFft/2+1). */
export function melFilterbank(opts: MelOptions): Float64Array[] {
  const { sampleRate, nFft, nMels, fMin, fMax } = opts;
  const nBins = (nFft >> 1) + 1;
  const melPoints = new Float64Array(nMels + 2);
  const lo = hzToMel(fMin);
  const hi = hzToMel(fMax);
  for (let i = 0; i < nMels + 2; i++) {
    melPoints[i] = melToHz(lo + ((hi - lo) * i) / (nMels + 1));
  }
  const filters: Float64Array[] = [];
  for (let m = 0; m < nMels; m++) {
    const filter = new Float64Array(nBins);
    const [left, center, right] = [melPoints[m], melPoints[m + 1], melPoints[m + 2]];
    for (let k = 0; k < nBins; k++) {
      const freq = (k * sampleRate) / nFft;
      const up = (freq - left) / (center - left);
      const down = (right - freq) / (right - center);
      filter[k] = Math.max(0, Math.min(up, down));
    }
    const enorm = 2.0 / (right - left);
    for (let k = 0; k < nBins; k++) filter[k] *= enorm;
    filters.push(filter);
  }
  return filters;
}

/** Mel power spectrogram: one nMels vector per frame. */
export function melSpectrogram(samples: Float64Array, opts: MelOptions): Float64Array[] {
  const power = powerSpectrogram(samples, { nFft: opts.nFft, hopLength: opts.hopLength });
  const filters = melFilterbank(opts);
  return power.map((bins) => {
    const out = new Float64Array(opts.nMels);
    for (let m = 0; m < opts.nMels; m++) {
      let acc = 0;
      const filter = filters[m];
      for (let k = 0; k < bins.length; k++) acc += filter[k] * bins[k];
      out[m] = acc;
    }
    return out;
  });
}

/** 10*log10 with an amplitude floor and 80 dB dynamic-range clamp. */
export function powerToDb(frames: Float64Array[], amin = 1e-10, topDb = 80.0): Float64Array[] {
  let maxDb = -Infinity;
  const out = frames.map((frame) => {
    const db = new Float64Array(frame.length);
    for (let i = 0; i < frame.length; i++) {
      db[i] = 10.0 * Math.log10(Math.max(amin, frame[i]));
      if (db[i] > maxDb) maxDb = db[i];
    }
    return db;
  });
  for (const frame of out) {
    for (let i = 0; i < frame.length; i++) {
      frame[i] = Math.max(frame[i], maxDb - topDb);
    }
  }
  return out;
}

/** Orthonormal DCT-II matrix rows 0..nCoeffs-1 applied to each frame. */
export function dct2Ortho(frames: Float64Array[], nCoeffs: number): Float64Array[] {
  if (frames.length === 0) return [];
  const n = frames[0].length;
  const basis: Float64Array[] = [];
  for (let k = 0; k < nCoeffs; k++) {
    const row = new Float64Array(n);
    const scale = k === 0 ? Math.sqrt(1 / n) : Math.sqrt(2 / n);
    for (let i = 0; i < n; i++) {
      row[i] = scale * Math.cos((Math.PI * k * (2 * i + 1)) / (2 * n));
    }
    basis.push(row);
  }
  return frames.map((frame) => {
    const out = new Float64Array(nCoeffs);
    for (let k = 0; k < nCoeffs; k++) {
      let acc = 0;
      for (let i = 0; i < n; i++) acc += basis[k][i] * frame[i];
      out[k] = acc;
    }
    return out;
  });
}

/** MFCCs: DCT-II (ortho) of the dB-scaled mel spectrogram. */
export function mfcc(samples: Float64Array, opts: MelOptions, nMfcc = 20): Float64Array[] {
  return dct2Ortho(powerToDb(melSpectrogram(samples, opts)), nMfcc);
}
