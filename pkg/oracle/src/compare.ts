import { loadTensorText } from "./tensorText.js";

export interface FixtureDiff {
  name: string;
  maxAbs: number;
  maxRel: number;
  tolerance: number;
  pass: boolean;
}

/** Element-wise diff of two tensor text files; diff == tol still passes. */
export function diffTensors(referencePath: string, primaryPath: string, tolerance: number, name: string): FixtureDiff {
  const ref = loadTensorText(referencePath);
  const got = loadTensorText(primaryPath);
  if (ref.dims.join("x") !== got.dims.join("x")) {
    throw new Error(`${name}: dims ${got.dims} do not match reference dims ${ref.dims}`);
  }
  let maxAbs = 0;
  let maxRel = 0;
  for (let i = 0; i < ref.values.length; i++) {
    const abs = Math.abs(ref.values[i] - got.values[i]);
    if (abs > maxAbs) maxAbs = abs;
    const rel = abs / (Math.abs(ref.values[i]) + 1e-8);
    if (rel > maxRel) maxRel = rel;
  }
  return { name, maxAbs, maxRel, tolerance, pass: maxAbs <= tolerance };
}

export function formatDiffTable(diffs: FixtureDiff[]): string {
  const lines = ["fixture            max_abs      max_rel      tol      result"];
  for (const d of diffs) {
    lines.push(
      `${d.name.padEnd(18)} ${d.maxAbs.toExponential(3)}   ${d.maxRel.toExponential(3)}   ${d.tolerance.toExponential(0)}   ${d.pass ? "pass" : "FAIL"}`,
    );
  }
  return lines.join("\n");
}
