import { existsSync, mkdirSync, readFileSync } from "node:fs";
import { join } from "node:path";

import { diffTensors, formatDiffTable } from "./compare.js";
import { DEFAULT_PARAMS, logMel, type FrontendParams } from "./mel.js";
import { saveTensorText } from "./tensorText.js";
import { loadWav } from "./wav.js";

interface ManifestFixture {
  name: string;
  wav: string;
  tensor: string;
  tolerance: number;
}

interface Manifest {
  version: number;
  frontend: Record<string, number>;
  fixtures: ManifestFixture[];
}

function loadManifest(dir: string): Manifest {
  const path = join(dir, "manifest.json");
  if (!existsSync(path)) throw new Error(`${path}: manifest not found`);
  return JSON.parse(readFileSync(path, "utf8")) as Manifest;
}

function paramsFromManifest(m: Manifest): FrontendParams {
  const f = m.frontend;
  return {
    sampleRate: f.sample_rate ?? DEFAULT_PARAMS.sampleRate,
    seconds: f.seconds ?? DEFAULT_PARAMS.seconds,
    nMels: f.n_mels ?? DEFAULT_PARAMS.nMels,
    fftSize: f.fft_size ?? DEFAULT_PARAMS.fftSize,
    winLength: f.win_length ?? DEFAULT_PARAMS.winLength,
    hopLength: f.hop_length ?? DEFAULT_PARAMS.hopLength,
    fmin: f.fmin ?? DEFAULT_PARAMS.fmin,
    fmax: f.fmax ?? DEFAULT_PARAMS.fmax,
    logEps: f.log_eps ?? DEFAULT_PARAMS.logEps,
  };
}

/** Recompute every fixture's log-Mel tensor from its WAV alone. */
export function generateReferences(fixturesDir: string, outDir: string): string[] {
  const manifest = loadManifest(fixturesDir);
  const params = paramsFromManifest(manifest);
  mkdirSync(outDir, { recursive: true });
  const missing: string[] = [];
  const written: string[] = [];
  for (const fx of manifest.fixtures) {
    const wavPath = join(fixturesDir, fx.wav);
    if (!existsSync(wavPath)) {
      missing.push(fx.wav);
      continue;
    }
    const rows = logMel(loadWav(wavPath), params);
    const flat = new Float64Array(rows.length * params.nMels);
    rows.forEach((row, t) => flat.set(row, t * params.nMels));
    const outPath = join(outDir, fx.tensor);
    saveTensorText(outPath, [1, rows.length, params.nMels], flat);
    written.push(outPath);
  }
  if (missing.length) {
    throw new Error(`missing fixtures: ${missing.join(", ")}`);
  }
  return written;
}

export function compareDirs(referenceDir: string, primaryDir: string, tolOverride?: number): boolean {
  const manifest = loadManifest(primaryDir);
  const diffs = manifest.fixtures.map((fx) =>
    diffTensors(
      join(referenceDir, fx.tensor),
      join(primaryDir, fx.tensor),
      tolOverride ?? fx.tolerance,
      fx.name,
    ),
  );
  console.log(formatDiffTable(diffs));
  return diffs.every((d) => d.pass);
}

function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    if (command === "generate") {
      const [fixturesDir, outDir] = rest;
      if (!fixturesDir || !outDir) {
        console.error("usage: main.js generate <fixtures_dir> <out_dir>");
        return 1;
      }
      const written = generateReferences(fixturesDir, outDir);
      console.log(`wrote ${written.length} reference tensors to ${outDir}`);
      return 0;
    }
    if (command === "compare") {
      const [referenceDir, primaryDir, tol] = rest;
      if (!referenceDir || !primaryDir) {
        console.error("usage: main.js compare <reference_dir> <primary_dir> [tol]");
        return 1;
      }
      const ok = compareDirs(referenceDir, primaryDir, tol ? Number.parseFloat(tol) : undefined);
      return ok ? 0 : 2;
    }
    console.error("usage: main.js <generate|compare> ...");
    return 1;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
}

if (process.argv[1] && process.argv[1].endsWith("main.js")) {
  process.exit(main(process.argv.slice(2)));
}
