import { describe, expect, it } from "vitest";

import { polyfit, polyval } from "../src/polyfit.js";
import { mulberry32, uniforms } from "../src/rng.js";

describe("polyfit", () => {
  it("recovers exact coefficients from noiseless data", () => {
    const x = uniforms(mulberry32(11), 50, -1, 1);
    const truth = [0.25, -1.5, 0, 2.0]; // 0.25 - 1.5x + 2x^3
    const y = new Float64Array(x.length);
    for (let i = 0; i < x.length; i++) {
      const xi = x[i]!;
      y[i] = truth[0]! + truth[1]! * xi + truth[3]! * xi * xi * xi;
    }
    const coeffs = polyfit(x, y, 3);
    expect(coeffs).toHaveLength(4);
    for (let k = 0; k < 4; k++) {
      expect(Math.abs(coeffs[k]! - truth[k]!)).toBeLessThan(1e-10);
    }
  });

  it("reduces to the mean at degree 0", () => {
    const x = Float64Array.from([-1, 0, 1, 2]);
    const y = Float64Array.from([1, 2, 3, 6]);
    const coeffs = polyfit(x, y, 0);
    expect(coeffs[0]).toBeCloseTo(3, 12);
  });

  it("matches the hand-solved least-squares line", () => {
    // Points (0,0), (1,2), (2,3): slope 3/2, intercept 1/6.
    const x = Float64Array.from([0, 1, 2]);
    const y = Float64Array.from([0, 2, 3]);
    const coeffs = polyfit(x, y, 1);
    expect(coeffs[0]).toBeCloseTo(1 / 6, 12);
    expect(coeffs[1]).toBeCloseTo(3 / 2, 12);
  });

  it("rejects underdetermined fits", () => {
    const x = Float64Array.from([1, 2]);
    const y = Float64Array.from([1, 2]);
    expect(() => polyfit(x, y, 2)).toThrow(/points/);
  });

  it("rejects mismatched inputs", () => {
    expect(() => polyfit(Float64Array.from([1, 2, 3]), Float64Array.from([1]), 1)).toThrow(/points/);
  });
});

describe("polyval", () => {
  it("evaluates ascending coefficients", () => {
    const coeffs = Float64Array.from([1, 0, 2]); // 1 + 2x^2
    const out = polyval(coeffs, Float64Array.from([0, 1, -3]));
    expect(Array.from(out)).toEqual([1, 3, 19]);
  });

  it("treats an empty coefficient list as zero", () => {
    const out = polyval(new Float64Array(0), Float64Array.from([5]));
    expect(out[0]).toBe(0);
  });
});
