/** WAV decoding (PCM16 / IEEE float32), mono downmix, linear resampling. */

export interface RawAudio {
  samples: Float64Array;
  sampleRate: number;
}

export function decodeWav(buffer: Buffer): RawAudio {
  if (buffer.length < 44 || buffer.toString("ascii", 0, 4) !== "RIFF" ||
      buffer.toString("ascii", 8, 12) !== "WAVE") {
    throw new Error("not a RIFF/WAVE file");
  }
  let offset = 12;
  let format = 0;
  let channels = 0;
  let sampleRate = 0;
  let bitsPerSample = 0;
  let data: Buffer | null = null;
  while (offset + 8 <= buffer.length) {
    const chunkId = buffer.toString("ascii", offset, offset + 4);
    const chunkSize = buffer.readUInt32LE(offset + 4);
    const body = offset + 8;
    if (chunkId === "fmt ") {
      format = buffer.readUInt16LE(body);
      channels = buffer.readUInt16LE(body + 2);
      sampleRate = buffer.readUInt32LE(body + 4);
      bitsPerSample = buffer.readUInt16LE(body + 14);
    } else if (chunkId === "data") {
      data = buffer.subarray(body, body + chunkSize);
    }
    offset = body + chunkSize + (chunkSize % 2);
  }
  if (!data || !channels || !sampleRate) {
    throw new Error("missing fmt or data chunk");
  }

  let interleaved: Float64Array;
  if (format === 1 && bitsPerSample === 16) {
    const n = Math.floor(data.length / 2);
    interleaved = new Float64Array(n);
    for (let i = 0; i < n; i++) {
      interleaved[i] = data.readInt16LE(i * 2) / 32768;
    }
  } else if (format === 3 && bitsPerSample === 32) {
    const n = Math.floor(data.length / 4);
    interleaved = new Float64Array(n);
    for (let i = 0; i < n; i++) {
      interleaved[i] = data.readFloatLE(i * 4);
    }
  } else {
    throw new Error(`unsupported WAV encoding: format=${format} bits=${bitsPerSample}`);
  }

  const frames = Math.floor(interleaved.length / channels);
  const samples = new Float64Array(frames);
  for (let i = 0; i < frames; i++) {
    let acc = 0;
    for (let c = 0; c < channels; c++) acc += interleaved[i * channels + c];
    samples[i] = acc / channels;
  }
  return { samples, sampleRate };
}

export function encodeWavPcm16(samples: Float64Array, sampleRate: number): Buffer {
  const data = Buffer.alloc(samples.length * 2);
  for (let i = 0; i < samples.length; i++) {
    const v = Math.max(-1, Math.min(1, samples[i]));
    data.writeInt16LE(Math.round(v * 32767), i * 2);
  }
  const header = Buffer.alloc(44);
  header.write("RIFF", 0, "ascii");
  header.writeUInt32LE(36 + data.length, 4);
  header.write("WAVE", 8, "ascii");
  header.write("fmt ", 12, "ascii");
  header.writeUInt32LE(16, 16);
  header.writeUInt16LE(1, 20);
  header.writeUInt16LE(1, 22);
  header.writeUInt32LE(sampleRate, 24);
  header.writeUInt32LE(sampleRate * 2, 28);
  header.writeUInt16LE(2, 32);
  header.writeUInt16LE(16, 34);
  header.write("data", 36, "ascii");
  header.writeUInt32LE(data.length, 40);
  return Buffer.concat([header, data]);
}

/** Linear-interpolation resampler; adequate for framing, recorded in metadata. */
export function resample(audio: RawAudio, targetRate: number): RawAudio {
  if (audio.sampleRate === targetRate) return audio;
  const ratio = audio.sampleRate / targetRate;
  const n = Math.max(1, Math.round(audio.samples.length / ratio));
  const out = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    const pos = i * ratio;
    const left = Math.floor(pos);
    const right = Math.min(left + 1, audio.samples.length - 1);
    const frac = pos - left;
    out[i] = audio.samples[left] * (1 - frac) + audio.samples[right] * frac;
  }
  return { samples: out, sampleRate: targetRate };
}

export function durationSeconds(audio: RawAudio): number {
  return audio.samples.length / audio.sampleRate;
}
