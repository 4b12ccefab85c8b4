/**
 * Pack assembly. A pack directory holds everything one regression run
 * needs: briefing documents plus datasets under input/, canned
 * solutions, the evaluation program, and a pack.json manifest whose
 * recorded scores come from actually running each solution.
 */

import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { spawnSync } from "node:child_process";

import { generateDataset, DEFAULT_PARAMS, type Dataset, type DatasetParams } from "./dataset.js";
import { mse } from "./metrics.js";
import { writeNpy } from "./npy.js";
import { polyfit, polyval } from "./polyfit.js";
import {
  EVALUATE_PY,
  EVALUATION_MD,
  REQUIREMENTS_MD,
  SOLUTIONS,
  dataConfigJson,
  guidelinesMd,
  problemMd,
  solutionSource,
} from "./templates.js";

export interface SolutionEntry {
  file: string;
  score: number;
}

export interface PackManifest {
  name: string;
  description: string;
  datasets: Record<string, [number, number]>;
  evaluate_script: string;
  guidelines: string;
  solutions: SolutionEntry[];
}

export function loadManifest(packDir: string): PackManifest {
  const raw = fs.readFileSync(path.join(packDir, "pack.json"), "utf8");
  return JSON.parse(raw) as PackManifest;
}

export interface PythonRun {
  status: number | null;
  stdout: string;
  stderr: string;
}

export function runPython(args: string[], cwd: string, env: Record<string, string> = {}): PythonRun {
  const proc = spawnSync("python3", args, {
    cwd,
    env: { ...process.env, ...env },
    encoding: "utf8",
    timeout: 120_000,
  });
  if (proc.error) {
    throw proc.error;
  }
  return { status: proc.status, stdout: proc.stdout ?? "", stderr: proc.stderr ?? "" };
}

/** Last FINAL_SCORE line of an evaluation run, or NaN when absent. */
export function parseFinalScore(stdout: string): number {
  let score = NaN;
  for (const line of stdout.split("\n")) {
    const m = line.match(/^FINAL_SCORE:\s*(\S+)/);
    if (m) {
      score = Number.parseFloat(m[1]!);
    }
  }
  return score;
}

/**
 * Score one canned solution the way a real run would: copy it with the
 * training arrays into a scratch directory, train, then evaluate with
 * DATA_DIR pointing at the pack's validation split.
 */
export function measureScore(packDirArg: string, solutionFile: string): number {
  const packDir = path.resolve(packDirArg);
  const workdir = fs.mkdtempSync(path.join(os.tmpdir(), "fixturegen-"));
  try {
    const inputDir = path.join(packDir, "input");
    fs.copyFileSync(path.join(packDir, solutionFile), path.join(workdir, solutionFile));
    fs.copyFileSync(path.join(inputDir, "x_train.npy"), path.join(workdir, "x_train.npy"));
    fs.copyFileSync(path.join(inputDir, "u_train.npy"), path.join(workdir, "u_train.npy"));

    const train = runPython([solutionFile, "--mode=train"], workdir);
    if (train.status !== 0) {
      throw new Error(`${solutionFile} train run exited ${train.status}: ${train.stderr.trim()}`);
    }
    const evaluate = runPython([path.join(packDir, "evaluate.py")], workdir, {
      DATA_DIR: inputDir,
    });
    if (evaluate.status !== 0) {
      throw new Error(`evaluate.py exited ${evaluate.status} for ${solutionFile}: ${evaluate.stderr.trim()}`);
    }
    return parseFinalScore(evaluate.stdout);
  } finally {
    fs.rmSync(workdir, { recursive: true, force: true });
  }
}

/**
 * Validation MSE each canned solution should reach, computed natively.
 * Used to vet candidate datasets without spawning Python.
 */
export function predictedScores(ds: Dataset): number[] {
  return SOLUTIONS.map((spec) => {
    let pred: Float64Array;
    if (spec.degree === 0) {
      let mean = 0;
      for (const u of ds.uTrain) {
        mean += u;
      }
      mean /= ds.uTrain.length;
      pred = new Float64Array(ds.xVal.length).fill(mean);
    } else {
      const coeffs = polyfit(ds.xTrain, ds.uTrain, spec.degree);
      pred = polyval(coeffs, ds.xVal);
    }
    return mse(pred, ds.uVal);
  });
}

export interface WritePackOptions {
  force?: boolean;
  /** Skip the Python measurement runs and record natively predicted scores. */
  skipMeasurement?: boolean;
}

export function writePack(
  outDir: string,
  params: Partial<DatasetParams> = {},
  options: WritePackOptions = {},
): PackManifest {
  const p: DatasetParams = { ...DEFAULT_PARAMS, ...params };
  if (fs.existsSync(outDir) && fs.readdirSync(outDir).length > 0 && !options.force) {
    throw new Error(`${outDir} already exists and is not empty (use force to overwrite)`);
  }
  const inputDir = path.join(outDir, "input");
  fs.mkdirSync(inputDir, { recursive: true });

  const ds = generateDataset(p);
  const shape: [number, number] = [p.points, 1];
  writeNpy(path.join(inputDir, "x_train.npy"), ds.xTrain, shape);
  writeNpy(path.join(inputDir, "u_train.npy"), ds.uTrain, shape);
  writeNpy(path.join(inputDir, "x_val.npy"), ds.xVal, shape);
  writeNpy(path.join(inputDir, "u_val.npy"), ds.uVal, shape);

  fs.writeFileSync(path.join(inputDir, "Problem.md"), problemMd(p.points));
  fs.writeFileSync(path.join(inputDir, "Requirements.md"), REQUIREMENTS_MD);
  fs.writeFileSync(path.join(inputDir, "Evaluation.md"), EVALUATION_MD);
  fs.writeFileSync(path.join(inputDir, "Data_config.json"), dataConfigJson(p.points));

  fs.writeFileSync(path.join(outDir, "guidelines.md"), guidelinesMd(p.points));
  fs.writeFileSync(path.join(outDir, "evaluate.py"), EVALUATE_PY);
  for (const spec of SOLUTIONS) {
    fs.writeFileSync(path.join(outDir, spec.file), solutionSource(spec));
  }

  const scores = options.skipMeasurement
    ? predictedScores(ds)
    : SOLUTIONS.map((spec) => measureScore(outDir, spec.file));

  const manifest: PackManifest = {
    name: "toy-poly-regression",
    description: `${p.points}-point 1-D noisy polynomial; validation MSE, lower is better`,
    datasets: {
      "x_train.npy": shape,
      "u_train.npy": shape,
      "x_val.npy": shape,
      "u_val.npy": shape,
    },
    evaluate_script: "evaluate.py",
    guidelines: "guidelines.md",
    solutions: SOLUTIONS.map((spec, i) => ({ file: spec.file, score: scores[i]! })),
  };
  fs.writeFileSync(path.join(outDir, "pack.json"), JSON.stringify(manifest, null, 2) + "\n");
  return manifest;
}
