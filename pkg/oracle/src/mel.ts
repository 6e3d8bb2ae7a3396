import { hannWindow, powerSpectrum, reflectPad } from "./dsp.js";
import type { Waveform } from "./wav.js";

export interface FrontendParams {
  sampleRate: number;
  seconds: number;
  nMels: number;
  fftSize: number;
  winLength: number;
  hopLength: number;
  fmin: number;
  fmax: number;
  logEps: number;
}

export const DEFAULT_PARAMS: FrontendParams = {
  sampleRate: 16000,
  seconds: 5.0,
  nMels: 64,
  fftSize: 1024,
  winLength: 1024,
  hopLength: 400,
  fmin: 0,
  fmax: 8000,
  logEps: 1e-10,
};

/** HTK mel scale: m = 2595 log10(1 + f/700). */
export function hzToMel(f: number): number {
  return 2595 * Math.log10(1 + f / 700);
}

export function melToHz(m: number): number {
  return 700 * (10 ** (m / 2595) - 1);
}

/** Triangular HTK-mel filters with Slaney 2/(hi-lo) area normalization.
 *  Row-major [nMels][fftSize/2 + 1]. */
export function melFilterbank(p: FrontendParams): Float64Array[] {
  const bins = p.fftSize / 2 + 1;
  const pts = new Float64Array(p.nMels + 2);
  const melMin = hzToMel(p.fmin);
  const melMax = hzToMel(p.fmax);
  for (let i = 0; i < pts.length; i++) {
    pts[i] = melToHz(melMin + ((melMax - melMin) * i) / (p.nMels + 1));
  }
  const rows: Float64Array[] = [];
  for (let m = 0; m < p.nMels; m++) {
    const row = new Float64Array(bins);
    const lo = pts[m];
    const mid = pts[m + 1];
    const hi = pts[m + 2];
    const norm = 2 / (hi - lo);
    for (let k = 0; k < bins; k++) {
      const f = (k * p.sampleRate) / p.fftSize;
      const rising = (f - lo) / (mid - lo);
      const falling = (hi - f) / (hi - mid);
      row[k] = Math.max(0, Math.min(rising, falling)) * norm;
    }
    rows.push(row);
  }
  return rows;
}

export function fixLength(w: Waveform, seconds: number): Float64Array {
  const n = Math.round(seconds * w.sampleRate);
  const out = new Float64Array(n);
  out.set(w.samples.subarray(0, Math.min(n, w.samples.length)));
  return out;
}

/** Power spectrogram with reflect center padding: T = 1 + floor(n/hop). */
export function stftPower(samples: Float64Array, p: FrontendParams): Float64Array[] {
  const frames = 1 + Math.floor(samples.length / p.hopLength);
  const padded = reflectPad(samples, p.fftSize / 2);
  const window = new Float64Array(p.fftSize);
  const offset = (p.fftSize - p.winLength) / 2;
  window.set(hannWindow(p.winLength), offset);
  const out: Float64Array[] = [];
  const frame = new Float64Array(p.fftSize);
  for (let t = 0; t < frames; t++) {
    const start = t * p.hopLength;
    for (let i = 0; i < p.fftSize; i++) {
      frame[i] = padded[start + i] * window[i];
    }
    out.push(powerSpectrum(frame));
  }
  return out;
}

/** Full reference chain: fix length, STFT power, mel projection, ln(. + eps). */
export function logMel(w: Waveform, p: FrontendParams): Float64Array[] {
  if (w.sampleRate !== p.sampleRate) {
    throw new Error(`fixture rate ${w.sampleRate} != expected ${p.sampleRate}; reference does not resample`);
  }
  const samples = fixLength(w, p.seconds);
  const power = stftPower(samples, p);
  const fb = melFilterbank(p);
  return power.map((spectrum) => {
    const row = new Float64Array(p.nMels);
    for (let m = 0; m < p.nMels; m++) {
      let acc = 0;
      const filt = fb[m];
      for (let k = 0; k < spectrum.length; k++) {
        acc += spectrum[k] * filt[k];
      }
      row[m] = Math.log(acc + p.logEps);
    }
    return row;
  });
}
