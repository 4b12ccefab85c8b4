/**
 * Synthetic regression data for the fixture packs.
 *
 * The target is a cubic with no quadratic term, u = b1*x + b3*x^3,
 * observed under additive Gaussian noise on x drawn uniformly from
 * [-1, 1]. The coefficients are sized so the three canned solutions
 * land near a 0.25 / 0.03 / 0.002 validation-MSE ladder:
 *
 *   constant   Var(u)            = b1^2/3 + b3^2/7 + 2*b1*b3/5 + noiseVar
 *   linear     cubic residual    via the odd-moment projection
 *   cubic      noise floor       = noiseVar
 */

import { mulberry32, normals, uniforms, type UniformSource } from "./rng.js";

export interface DatasetParams {
  seed: number;
  points: number;
  b1: number;
  b3: number;
  noiseVar: number;
}

// Seed 318 was picked by scanning for the draw whose canned-solution
// ladder lands closest to the nominal 0.25 / 0.03 / 0.002 targets
// (within 0.33% on all three).
export const DEFAULT_PARAMS: DatasetParams = {
  seed: 318,
  points: 200,
  b1: 0.14833,
  b3: 1.1068,
  noiseVar: 0.002,
};

export interface Dataset {
  xTrain: Float64Array;
  uTrain: Float64Array;
  xVal: Float64Array;
  uVal: Float64Array;
  params: DatasetParams;
}

function target(x: Float64Array, b1: number, b3: number): Float64Array {
  const u = new Float64Array(x.length);
  for (let i = 0; i < x.length; i++) {
    const xi = x[i]!;
    u[i] = b1 * xi + b3 * xi * xi * xi;
  }
  return u;
}

function observe(x: Float64Array, rng: UniformSource, p: DatasetParams): Float64Array {
  const u = target(x, p.b1, p.b3);
  const eps = normals(rng, x.length);
  const sigma = Math.sqrt(p.noiseVar);
  for (let i = 0; i < u.length; i++) {
    u[i] = u[i]! + sigma * eps[i]!;
  }
  return u;
}

/**
 * Draw both splits from one seeded stream. Order matters for
 * reproducibility: train x, val x, train noise, val noise.
 */
export function generateDataset(params: Partial<DatasetParams> = {}): Dataset {
  const p: DatasetParams = { ...DEFAULT_PARAMS, ...params };
  const rng = mulberry32(p.seed);
  const xTrain = uniforms(rng, p.points, -1, 1);
  const xVal = uniforms(rng, p.points, -1, 1);
  const uTrain = observe(xTrain, rng, p);
  const uVal = observe(xVal, rng, p);
  return { xTrain, uTrain, xVal, uVal, params: p };
}
