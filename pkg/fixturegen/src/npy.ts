/**
 * Minimal .npy (format version 1.0) writer/reader for float64 arrays.
 *
 * Only the slice of the format the fixture packs need: little-endian
 * float64 ('<f8'), C order, 1-D or 2-D shapes. The header is padded to
 * a 64-byte boundary the same way NumPy pads it, so NumPy reads these
 * files without complaint.
 */

import * as fs from "node:fs";

const MAGIC = Buffer.from("\x93NUMPY", "latin1");

export function encodeNpy(values: Float64Array, shape: number[]): Buffer {
  const count = shape.reduce((a, b) => a * b, 1);
  if (count !== values.length) {
    throw new Error(`shape (${shape.join(", ")}) does not cover ${values.length} values`);
  }
  const shapeText = shape.length === 1 ? `(${shape[0]},)` : `(${shape.join(", ")})`;
  let header = `{'descr': '<f8', 'fortran_order': False, 'shape': ${shapeText}, }`;
  const unpadded = MAGIC.length + 2 + 2 + header.length + 1;
  header += " ".repeat((64 - (unpadded % 64)) % 64) + "\n";

  const head = Buffer.alloc(MAGIC.length + 2 + 2 + header.length);
  MAGIC.copy(head, 0);
  head[MAGIC.length] = 1; // format version 1.0
  head[MAGIC.length + 1] = 0;
  head.writeUInt16LE(header.length, MAGIC.length + 2);
  head.write(header, MAGIC.length + 4, "latin1");

  const data = Buffer.alloc(values.length * 8);
  for (let i = 0; i < values.length; i++) {
    data.writeDoubleLE(values[i]!, i * 8);
  }
  return Buffer.concat([head, data]);
}

export function writeNpy(path: string, values: Float64Array, shape: number[]): void {
  fs.writeFileSync(path, encodeNpy(values, shape));
}

export interface NpyArray {
  values: Float64Array;
  shape: number[];
}

export function readNpy(path: string): NpyArray {
  const buf = fs.readFileSync(path);
  if (!buf.subarray(0, MAGIC.length).equals(MAGIC)) {
    throw new Error(`${path}: not an .npy file`);
  }
  const major = buf[MAGIC.length];
  if (major !== 1) {
    throw new Error(`${path}: unsupported .npy format version ${major}`);
  }
  const headerLen = buf.readUInt16LE(MAGIC.length + 2);
  const header = buf.subarray(MAGIC.length + 4, MAGIC.length + 4 + headerLen).toString("latin1");
  if (!header.includes("'<f8'")) {
    throw new Error(`${path}: only '<f8' arrays are supported, header was ${header.trim()}`);
  }
  if (header.includes("'fortran_order': True")) {
    throw new Error(`${path}: fortran-order arrays are not supported`);
  }
  const shapeMatch = header.match(/'shape':\s*\(([^)]*)\)/);
  if (!shapeMatch) {
    throw new Error(`${path}: malformed .npy header`);
  }
  const shape = shapeMatch[1]!
    .split(",")
    .map((s) => s.trim())
    .filter((s) => s.length > 0)
    .map(Number);

  const start = MAGIC.length + 4 + headerLen;
  const count = shape.reduce((a, b) => a * b, 1);
  const values = new Float64Array(count);
  for (let i = 0; i < count; i++) {
    values[i] = buf.readDoubleLE(start + i * 8);
  }
  return { values, shape };
}
