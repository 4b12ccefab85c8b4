import { describe, expect, it } from "vitest";

import { mse, relativeL2 } from "../src/metrics.js";

describe("mse", () => {
  it("matches a hand-computed value", () => {
    const pred = Float64Array.from([1, 2, 3]);
    const truth = Float64Array.from([1, 0, 6]);
    expect(mse(pred, truth)).toBeCloseTo((0 + 4 + 9) / 3, 12);
  });

  it("is zero for identical vectors", () => {
    const v = Float64Array.from([0.1, -0.2, 0.3]);
    expect(mse(v, v)).toBe(0);
  });

  it("rejects mismatched lengths", () => {
    expect(() => mse(new Float64Array(2), new Float64Array(3))).toThrow(/mismatch/);
  });
});

describe("relativeL2", () => {
  it("is exactly 1.0 for all-zero predictions against nonzero truth", () => {
    const truth = Float64Array.from([0.3, -1.7, 2.9, 0.004]);
    expect(relativeL2(new Float64Array(4), truth)).toBe(1.0);
  });

  it("matches a hand-computed ratio", () => {
    const pred = Float64Array.from([3, 0]);
    const truth = Float64Array.from([0, 4]);
    expect(relativeL2(pred, truth)).toBeCloseTo(5 / 4, 12);
  });

  it("is zero when both vectors are zero", () => {
    expect(relativeL2(new Float64Array(3), new Float64Array(3))).toBe(0);
  });

  it("is infinite for nonzero predictions against zero truth", () => {
    expect(relativeL2(Float64Array.from([1e-9, 0]), new Float64Array(2))).toBe(Infinity);
  });
});
