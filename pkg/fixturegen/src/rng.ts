/**
 * Seeded random number generation.
 *
 * mulberry32 keeps dataset generation reproducible across platforms
 * without native dependencies. Normal deviates come from Box-Muller on
 * top of the uniform stream.
 */

export type UniformSource = () => number;

/** 32-bit mulberry32 PRNG. Returns uniforms in [0, 1). */
export function mulberry32(seed: number): UniformSource {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** n uniforms on [lo, hi). */
export function uniforms(rng: UniformSource, n: number, lo = 0, hi = 1): Float64Array {
  const out = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    out[i] = lo + (hi - lo) * rng();
  }
  return out;
}

/**
 * n standard normal deviates via Box-Muller.
 *
 * u1 is flipped to (1 - rng()) so the log argument stays strictly
 * positive even when the uniform stream emits an exact 0.
 */
export function normals(rng: UniformSource, n: number): Float64Array {
  const out = new Float64Array(n);
  let i = 0;
  while (i < n) {
    const u1 = 1 - rng();
    const u2 = rng();
    const r = Math.sqrt(-2 * Math.log(u1));
    out[i++] = r * Math.cos(2 * Math.PI * u2);
    if (i < n) {
      out[i++] = r * Math.sin(2 * Math.PI * u2);
    }
  }
  return out;
}
