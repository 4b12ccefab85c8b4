/**
 * Least-squares polynomial fitting, used by the generator to predict
 * what scores the canned solutions will reach on a candidate dataset
 * before any Python process is spawned.
 */

/**
 * Fit a polynomial of the given degree to (x, y) by solving the normal
 * equations. Returns coefficients in ascending order: c[0] + c[1] x + ...
 */
export function polyfit(x: Float64Array, y: Float64Array, degree: number): Float64Array {
  if (x.length !== y.length) {
    throw new Error(`x has ${x.length} points but y has ${y.length}`);
  }
  if (x.length <= degree) {
    throw new Error(`need more than ${degree} points to fit degree ${degree}`);
  }
  const m = degree + 1;

  // Normal equations: A c = b with A[i][j] = sum x^(i+j), b[i] = sum y x^i.
  const moments = new Float64Array(2 * degree + 1);
  const b = new Float64Array(m);
  for (let k = 0; k < x.length; k++) {
    let p = 1;
    for (let i = 0; i <= 2 * degree; i++) {
      moments[i] = moments[i]! + p;
      if (i <= degree) {
        b[i] = b[i]! + y[k]! * p;
      }
      p *= x[k]!;
    }
  }
  const a: number[][] = [];
  for (let i = 0; i < m; i++) {
    const row: number[] = [];
    for (let j = 0; j < m; j++) {
      row.push(moments[i + j]!);
    }
    a.push(row);
  }
  return solve(a, b);
}

/** Gaussian elimination with partial pivoting. */
function solve(a: number[][], b: Float64Array): Float64Array {
  const n = b.length;
  const rhs = Float64Array.from(b);
  for (let col = 0; col < n; col++) {
    let pivot = col;
    for (let row = col + 1; row < n; row++) {
      if (Math.abs(a[row]![col]!) > Math.abs(a[pivot]![col]!)) {
        pivot = row;
      }
    }
    if (Math.abs(a[pivot]![col]!) < 1e-12) {
      throw new Error("singular system in polynomial fit");
    }
    if (pivot !== col) {
      [a[col], a[pivot]] = [a[pivot]!, a[col]!];
      const tmp = rhs[col]!;
      rhs[col] = rhs[pivot]!;
      rhs[pivot] = tmp;
    }
    for (let row = col + 1; row < n; row++) {
      const factor = a[row]![col]! / a[col]![col]!;
      for (let j = col; j < n; j++) {
        a[row]![j] = a[row]![j]! - factor * a[col]![j]!;
      }
      rhs[row] = rhs[row]! - factor * rhs[col]!;
    }
  }
  const c = new Float64Array(n);
  for (let row = n - 1; row >= 0; row--) {
    let acc = rhs[row]!;
    for (let j = row + 1; j < n; j++) {
      acc -= a[row]![j]! * c[j]!;
    }
    c[row] = acc / a[row]![row]!;
  }
  return c;
}

/** Evaluate ascending-order coefficients at each x. */
export function polyval(coeffs: Float64Array, x: Float64Array): Float64Array {
  const out = new Float64Array(x.length);
  for (let k = 0; k < x.length; k++) {
    let acc = 0;
    for (let i = coeffs.length - 1; i >= 0; i--) {
      acc = acc * x[k]! + coeffs[i]!;
    }
    out[k] = acc;
  }
  return out;
}
