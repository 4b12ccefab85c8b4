/**
 * File contents for a generated pack: the briefing documents a run
 * consumes, the canned solutions, and the evaluation program. Only the
 * point count varies between packs; everything else is fixed text so
 * generated packs stay interchangeable with the checked-in one.
 */

export interface SolutionSpec {
  file: string;
  degree: number;
  docstring: string;
}

export const SOLUTIONS: SolutionSpec[] = [
  {
    file: "solution_s0.py",
    degree: 0,
    docstring: "Baseline: constant predictor (degree-0 polynomial, the target mean).",
  },
  {
    file: "solution_s1.py",
    degree: 1,
    docstring: "Linear least-squares fit (degree-1 polynomial).",
  },
  {
    file: "solution_s2.py",
    degree: 3,
    docstring: "Cubic least-squares fit (degree-3 polynomial).",
  },
];

export function problemMd(points: number): string {
  return `# Problem

A scalar quantity u was measured at ${points} scattered points x in [-1, 1].
The measurements are noisy samples of an unknown smooth function. Build
a model that predicts u at new locations drawn from the same interval.

The training measurements are provided as NumPy arrays (see the data
configuration). A held-out set of ${points} measurements from the same
process is used for scoring; solutions never read it directly.
`;
}

export const REQUIREMENTS_MD = `# Requirements

- Python 3.10+, NumPy only; no other third-party imports.
- The solution is a single file \`solution.py\` taking \`--mode=validate\`
  or \`--mode=train\`. Validate must finish in a few seconds (it may fit
  on a subset); train performs the full fit.
- Both modes write the model to \`./MODEL_CHECKPOINT\` as JSON of the
  form \`{"coeffs": [c0, c1, ...]}\`: polynomial coefficients in
  ascending powers of x.
- Training must be deterministic: no randomness, or a fixed seed.
- Read training data only from the copies in the working directory.
`;

export const EVALUATION_MD = `# Evaluation

The score is the mean squared error of the checkpointed polynomial on
the held-out pairs (x_val, u_val). Lower is better.

The evaluation program loads \`MODEL_CHECKPOINT\` from the solution's
working directory, evaluates the polynomial at x_val, and prints the
score as its final line in the form:

    FINAL_SCORE: <decimal>

A checkpoint that cannot be parsed scores NaN, which counts as a
failed run. For reference it also prints the relative L2 error
(‖pred − true‖₂ / ‖true‖₂) of the same predictions.
`;

export function dataConfigJson(points: number): string {
  const shape = `(${points}, 1)`;
  return (
    JSON.stringify(
      {
        x_train: {
          filename: "x_train.npy",
          description: `training inputs, float64 array of shape ${shape}, values in [-1, 1]`,
          loading_instructions: "numpy.load('x_train.npy')",
          role: "training",
        },
        u_train: {
          filename: "u_train.npy",
          description: `noisy training targets, float64 array of shape ${shape}`,
          loading_instructions: "numpy.load('u_train.npy')",
          role: "training",
        },
        x_val: {
          filename: "x_val.npy",
          description: `held-out inputs, float64 array of shape ${shape}; read only by the evaluation program`,
          loading_instructions: "numpy.load under DATA_DIR",
          role: "validation",
        },
        u_val: {
          filename: "u_val.npy",
          description: `held-out targets, float64 array of shape ${shape}; read only by the evaluation program`,
          loading_instructions: "numpy.load under DATA_DIR",
          role: "validation",
        },
      },
      null,
      2,
    ) + "\n"
  );
}

export function guidelinesMd(points: number): string {
  return `# Engineering guidelines

- Model: a polynomial in x. The checkpoint is the JSON file
  \`MODEL_CHECKPOINT\` in the solution's working directory, of the form
  \`{"coeffs": [c0, c1, ...]}\` with coefficients in ascending powers.
- Data: \`x_train.npy\` and \`u_train.npy\`, float64 arrays of shape
  (${points}, 1), are copied into the working directory. Flatten with
  \`.ravel()\` before fitting. The validation arrays are not visible to
  solutions; the evaluation program reads them from \`DATA_DIR\`.
- Interface: \`solution.py\` accepts \`--mode=validate\` (quick fit on a
  subset, seconds) and \`--mode=train\` (full fit). Both modes must
  write the checkpoint and exit 0.
- Score: validation MSE, printed (by the evaluation program, not the
  solution) as the final \`FINAL_SCORE:\` line. Lower is better.
- Determinism: fits must be closed-form or fixed-seed; two train runs
  must produce identical checkpoints.
`;
}

export function solutionSource(spec: SolutionSpec): string {
  return `"""${spec.docstring}"""

import argparse
import json

import numpy as np

DEGREE = ${spec.degree}


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--mode", choices=["validate", "train"], default="validate")
    args = parser.parse_args()

    x = np.load("x_train.npy").ravel()
    u = np.load("u_train.npy").ravel()
    if args.mode == "validate":
        x, u = x[:20], u[:20]

    if DEGREE == 0:
        coeffs = [float(u.mean())]
    else:
        coeffs = [float(c) for c in np.polyfit(x, u, DEGREE)[::-1]]
    with open("MODEL_CHECKPOINT", "w") as fh:
        json.dump({"coeffs": coeffs}, fh)

    pred = sum(c * x**k for k, c in enumerate(coeffs))
    print(f"mode={args.mode} degree={DEGREE} n={x.size} train_mse={float(np.mean((pred - u) ** 2)):.8f}")


if __name__ == "__main__":
    main()
`;
}

export const EVALUATE_PY = `"""Score a checkpointed polynomial on the held-out split.

Reads MODEL_CHECKPOINT from the working directory, the validation
arrays from $DATA_DIR (default "."), and prints the validation MSE as
the final FINAL_SCORE line. An unusable checkpoint scores NaN.
"""

import json
import os

import numpy as np


def relative_l2(pred, true):
    denom = float(np.linalg.norm(true))
    if denom == 0.0:
        return 0.0 if not np.any(pred) else float("inf")
    return float(np.linalg.norm(pred - true) / denom)


def main():
    data_dir = os.environ.get("DATA_DIR", ".")
    x = np.load(os.path.join(data_dir, "x_val.npy")).ravel()
    u = np.load(os.path.join(data_dir, "u_val.npy")).ravel()
    try:
        with open("MODEL_CHECKPOINT") as fh:
            coeffs = [float(c) for c in json.load(fh)["coeffs"]]
        pred = np.zeros_like(x)
        for k, c in enumerate(coeffs):
            pred = pred + c * x**k
        score = float(np.mean((pred - u) ** 2))
        print(f"n_val={x.size} relative_l2={relative_l2(pred, u):.8f}")
    except Exception as exc:
        print(f"checkpoint unusable: {exc}")
        score = float("nan")
    print(f"FINAL_SCORE: {score}")


if __name__ == "__main__":
    main()
`;
