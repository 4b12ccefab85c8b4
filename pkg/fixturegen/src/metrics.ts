/** Error metrics matching the pack's evaluation program. */

export function mse(pred: Float64Array, truth: Float64Array): number {
  if (pred.length !== truth.length) {
    throw new Error(`length mismatch: ${pred.length} vs ${truth.length}`);
  }
  let acc = 0;
  for (let i = 0; i < pred.length; i++) {
    const d = pred[i]! - truth[i]!;
    acc += d * d;
  }
  return acc / pred.length;
}

/**
 * Relative L2 error, ||pred - truth|| / ||truth||.
 *
 * Zero truth is degenerate: the ratio is 0 when pred is also all
 * zeros and +Infinity otherwise, mirroring the Python scorer.
 */
export function relativeL2(pred: Float64Array, truth: Float64Array): number {
  if (pred.length !== truth.length) {
    throw new Error(`length mismatch: ${pred.length} vs ${truth.length}`);
  }
  let num = 0;
  let denom = 0;
  for (let i = 0; i < pred.length; i++) {
    const d = pred[i]! - truth[i]!;
    num += d * d;
    denom += truth[i]! * truth[i]!;
  }
  if (denom === 0) {
    return num === 0 ? 0 : Infinity;
  }
  return Math.sqrt(num) / Math.sqrt(denom);
}
