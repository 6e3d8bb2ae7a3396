import { readFileSync, writeFileSync } from "node:fs";

export interface TextTensor {
  dims: number[];
  values: Float64Array;
}

/** Canonical tensor text: `dims: d0 d1 ...` then whitespace-separated reals. */
export function loadTensorText(path: string): TextTensor {
  const text = readFileSync(path, "utf8");
  const newline = text.indexOf("\n");
  const header = text.slice(0, newline);
  if (!header.startsWith("dims:")) {
    throw new Error(`${path}: missing 'dims:' header`);
  }
  const dims = header
    .slice(5)
    .trim()
    .split(/\s+/)
    .map((d) => Number.parseInt(d, 10));
  const tokens = text.slice(newline + 1).trim().split(/\s+/);
  const expected = dims.reduce((a, b) => a * b, 1);
  if (tokens.length !== expected) {
    throw new Error(`${path}: expected ${expected} values for dims ${dims}, found ${tokens.length}`);
  }
  const values = new Float64Array(expected);
  for (let i = 0; i < expected; i++) {
    values[i] = Number.parseFloat(tokens[i]);
    if (!Number.isFinite(values[i])) {
      throw new Error(`${path}: unparseable value ${tokens[i]} at index ${i}`);
    }
  }
  return { dims, values };
}

export function saveTensorText(path: string, dims: number[], values: Float64Array): void {
  const rowLen = dims[dims.length - 1] ?? 1;
  const lines: string[] = [`dims: ${dims.join(" ")}`];
  for (let start = 0; start < values.length; start += rowLen) {
    const parts: string[] = [];
    for (let i = start; i < Math.min(start + rowLen, values.length); i++) {
      parts.push(values[i].toExponential(9));
    }
    lines.push(parts.join(" "));
  }
  writeFileSync(path, lines.join("\n") + "\n");
}
