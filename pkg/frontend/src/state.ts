import type { LossRow, StateSnapshot } from "./types.js";

interface StateHeader {
  n: number;
  positions_dtype: string;
  positions_shape: [number, number];
  labels_dtype: string;
  steps_done: number;
  history: LossRow[];
}

/**
 * Decode a binary state response: one JSON header line, then n*3 float32
 * positions, then n int32 labels, both little-endian.
 */
export function parseStateBuffer(buf: ArrayBuffer): StateSnapshot {
  const bytes = new Uint8Array(buf);
  const newline = bytes.indexOf(0x0a);
  if (newline < 0) {
    throw new Error("state payload has no header line");
  }
  const headerText = new TextDecoder().decode(bytes.subarray(0, newline));
  let header: StateHeader;
  try {
    header = JSON.parse(headerText) as StateHeader;
  } catch {
    throw new Error("state header is not valid JSON");
  }
  if (header.positions_dtype !== "<f4" || header.labels_dtype !== "<i4") {
    throw new Error(
      `unsupported state dtypes: ${header.positions_dtype} / ${header.labels_dtype}`,
    );
  }
  const n = header.n;
  const body = bytes.subarray(newline + 1);
  const expected = n * 3 * 4 + n * 4;
  if (body.length !== expected) {
    throw new Error(
      `state body is ${body.length} bytes, expected ${expected} for n=${n}`,
    );
  }
  // The body starts at an arbitrary offset inside the response buffer, so
  // copy into fresh buffers to satisfy typed-array alignment.
  const positionBytes = body.slice(0, n * 3 * 4);
  const labelBytes = body.slice(n * 3 * 4);
  return {
    n,
    stepsDone: header.steps_done,
    history: header.history,
    positions: new Float32Array(positionBytes.buffer),
    labels: new Int32Array(labelBytes.buffer),
  };
}

/**
 * Parse a group-label text file ("id label" rows, # comments) into a dense
 * label array ordered by Gaussian id.
 */
export function parseGroupLabels(text: string): Int32Array {
  const entries: Array<[number, number]> = [];
  let maxId = -1;
  for (const raw of text.split("\n")) {
    const line = raw.trim();
    if (line === "" || line.startsWith("#")) {
      continue;
    }
    const fields = line.split(/\s+/);
    if (fields.length !== 2) {
      throw new Error(`label row ${JSON.stringify(line)}: expected 'id label'`);
    }
    const id = Number(fields[0]);
    const label = Number(fields[1]);
    if (!Number.isInteger(id) || !Number.isInteger(label)) {
      throw new Error(`label row ${JSON.stringify(line)}: expected integers`);
    }
    entries.push([id, label]);
    maxId = Math.max(maxId, id);
  }
  const labels = new Int32Array(maxId + 1).fill(-1);
  for (const [id, label] of entries) {
    labels[id] = label;
  }
  return labels;
}
