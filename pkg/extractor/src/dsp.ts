/** FFT, windowing, and the short-time power spectrogram. */

/** In-place iterative radix-2 FFT over interleaved re/im pairs. */
export function fftRadix2(re: Float64Array, im: Float64Array): void {
  const n = re.length;
  if (n === 0 || (n & (n - 1)) !== 0) {
    throw new Error(`FFT length must be a power of two, got ${n}`);
  }
  // bit-reversal permutation
  for (let i = 1, j = 0; i < n; i++) {
    let bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      [re[i], re[j]] = [re[j], re[i]];
      [im[i], im[j]] = [im[j], im[i]];
    }
  }
  for (let len = 2; len <= n; len <<= 1) {
    const ang = (-2 * Math.PI) / len;
    const wRe = Math.cos(ang);
    const wIm = Math.sin(ang);
    for (let i = 0; i < n; i += len) {
      let curRe = 1;
      let curIm = 0;
      for (let k = 0; k < len / 2; k++) {
        const uRe = re[i + k];
        const uIm = im[i + k];
        const vRe = re[i + k + len / 2] * curRe - im[i + k + len / 2] * curIm;
        const vIm = re[i + k + len / 2] * curIm + im[i + k + len / 2] * curRe;
        re[i + k] = uRe + vRe;
        im[i + k] = uIm + vIm;
        re[i + k + len / 2] = uRe - vRe;
        im[i + k + len / 2] = uIm - vIm;
        const nextRe = curRe * wRe - curIm * wIm;
        curIm = curRe * wIm + curIm * wRe;
        curRe = nextRe;
      }
    }
  }
}

/** Symmetric Hann window (periodic form, matching common STFT usage). */
export function hannWindow(size: number): Float64Array {
  const w = new Float64Array(size);
  for (let i = 0; i < size; i++) {
    w[i] = 0.5 * (1 - Math.cos((2 * Math.PI * i) / size));
  }
  return w;
}

export interface StftOptions {
  nFft: number;
  hopLength: number;
}

/**
 * Power spectrogram |STFT|^2 with centered frames (reflect padding), so
 * frame i is centered at sample i * hopLength. Returns one Float64Array
 * of nFft/2 + 1 bins per frame.
 */
export function powerSpectrogram(
  samples: Float64Array, { nFft, hopLength }: StftOptions,
): Float64Array[] {
  const half = nFft >> 1;
  const padded = reflectPad(samples, half);
  const nFrames = 1 + Math.floor(samples.length / hopLength);
  const window = hannWindow(nFft);
  const frames: Float64Array[] = [];
  const re = new Float64Array(nFft);
  const im = new Float64Array(nFft);
  for (let f = 0; f < nFrames; f++) {
    const start = f * hopLength;
    for (let i = 0; i < nFft; i++) {
      re[i] = padded[start + i] * window[i];
      im[i] = 0;
    }
    fftRadix2(re, im);
    const bins = new Float64Array(half + 1);
    for (let k = 0; k <= half; k++) {
      bins[k] = re[k] * re[k] + im[k] * im[k];
    }
    frames.push(bins);
  }
  return frames;
}

/** Mirror index without repeating the edge sample (numpy "reflect"). */
function reflectIndex(i: number, n: number): number {
  if (n === 1) return 0;
  const period = 2 * n - 2;
  let j = ((i % period) + period) % period;
  return j < n ? j : period - j;
}

function reflectPad(samples: Float64Array, pad: number): Float64Array {
  const n = samples.length;
  if (n === 0) throw new Error("cannot pad empty signal");
  const out = new Float64Array(n + 2 * pad);
  out.set(samples, pad);
  for (let i = 1; i <= pad; i++) {
    out[pad - i] = samples[reflectIndex(i, n)];
    out[pad + n - 1 + i] = samples[reflectIndex(n - 1 + i, n)];
  }
  return out;
}
