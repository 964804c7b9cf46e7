import { describe, expect, it } from "vitest";

import {
  dct2Ortho,
  hzToMel,
  melFilterbank,
  melSpectrogram,
  melToHz,
  mfcc,
  powerToDb,
} from "../src/mel.js";

const OPTS = { sampleRate: 22050, nFft: 2048, hopLength: 512, nMels: 128, fMin: 0, fMax: 11025 };

describe("mel scale", () => {
  it("round-trips hz -> mel -> hz", () => {
    for (const hz of [0, 100, 440, 999, 1000, 1001, 4000, 11025]) {
      expect(melToHz(hzToMel(hz))).toBeCloseTo(hz, 9);
    }
  });

  it("is linear below 1 kHz", () => {
    expect(hzToMel(500)).toBeCloseTo(hzToMel(250) * 2, 12);
  });
});

describe("melFilterbank", () => {
  it("has the right shape and non-negative weights", () => {
    const filters = melFilterbank(OPTS);
    expect(filters.length).toBe(128);
    for (const f of filters) {
      expect(f.length).toBe(1025);
      for (const v of f) expect(v).toBeGreaterThanOrEqual(0);
    }
  });

  it("every filter responds to some bin", () => {
    const filters = melFilterbank(OPTS);
    for (const f of filters) {
      expect(Math.max(...f)).toBeGreaterThan(0);
    }
  });
});

describe("dct2Ortho", () => {
  it("uses orthonormal rows", () => {
    const n = 16;
    const eye: Float64Array[] = [];
    for (let i = 0; i < n; i++) {
      const row = new Float64Array(n);
      row[i] = 1;
      eye.push(row);
    }
    const basisT = dct2Ortho(eye, n); // rows are DCT of basis vectors
    for (let i = 0; i < n; i++) {
      for (let j = 0; j < n; j++) {
        let dot = 0;
        for (let k = 0; k < n; k++) dot += basisT[k][i] * basisT[k][j];
        expect(dot).toBeCloseTo(i === j ? 1 : 0, 10);
      }
    }
  });
});

describe("powerToDb", () => {
  it("clamps the dynamic range to 80 dB below the peak", () => {
    const frames = [new Float64Array([1.0, 1e-12])];
    const db = powerToDb(frames);
    expect(db[0][0]).toBeCloseTo(0, 10);
    expect(db[0][1]).toBeCloseTo(-80, 10);
  });
});

describe("feature shapes", () => {
  it("melSpectrogram yields nMels per frame, mfcc yields nMfcc", () => {
    const samples = new Float64Array(22050);
    for (let i = 0; i < samples.length; i++) {
      samples[i] = Math.sin((2 * Math.PI * 220 * i) / 22050);
    }
    const mel = melSpectrogram(samples, OPTS);
    expect(mel[0].length).toBe(128);
    const coeffs = mfcc(samples, OPTS, 20);
    expect(coeffs.length).toBe(mel.length);
    expect(coeffs[0].length).toBe(20);
  });
});
