import { readFileSync } from "node:fs";

export interface Waveform {
  samples: Float64Array;
  sampleRate: number;
}

/** Read a RIFF/WAVE PCM-16 file; stereo frames are averaged to mono. */
export function loadWav(path: string): Waveform {
  const raw = readFileSync(path);
  if (raw.length < 12 || raw.toString("ascii", 0, 4) !== "RIFF" || raw.toString("ascii", 8, 12) !== "WAVE") {
    throw new Error(`${path}: not a RIFF/WAVE file`);
  }
  let fmt: Buffer | null = null;
  let data: Buffer | null = null;
  let pos = 12;
  while (pos + 8 <= raw.length) {
    const id = raw.toString("ascii", pos, pos + 4);
    const size = raw.readUInt32LE(pos + 4);
    const body = raw.subarray(pos + 8, pos + 8 + size);
    if (id === "fmt ") fmt = body;
    else if (id === "data") data = body;
    pos += 8 + size + (size & 1);
  }
  if (!fmt || fmt.length < 16) throw new Error(`${path}: missing fmt chunk`);
  if (!data) throw new Error(`${path}: missing data chunk`);
  const audioFormat = fmt.readUInt16LE(0);
  const channels = fmt.readUInt16LE(2);
  const rate = fmt.readUInt32LE(4);
  const bits = fmt.readUInt16LE(14);
  if (audioFormat !== 1 || bits !== 16) {
    throw new Error(`${path}: unsupported encoding (format=${audioFormat}, bits=${bits})`);
  }
  const frameCount = Math.floor(data.length / (2 * channels));
  const samples = new Float64Array(frameCount);
  for (let i = 0; i < frameCount; i++) {
    let acc = 0;
    for (let c = 0; c < channels; c++) {
      acc += data.readInt16LE(2 * (i * channels + c)) / 32768;
    }
    samples[i] = acc / channels;
  }
  return { samples, sampleRate: rate };
}
