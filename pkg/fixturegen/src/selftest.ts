/**
 * Pack selftest: proves a pack directory still behaves the way its
 * manifest claims, by exercising every canned solution end to end the
 * same way a real run would.
 *
 * Per solution it checks the checkpoint protocol in both modes, the
 * FINAL_SCORE marker contract, evaluation determinism, and agreement
 * with the recorded score. Across solutions it checks that the ladder
 * of recorded scores strictly improves.
 */

import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { loadManifest, parseFinalScore, runPython, type PackManifest } from "./pack.js";

export interface SelftestCheck {
  name: string;
  ok: boolean;
  detail: string;
}

export interface SelftestReport {
  packDir: string;
  ok: boolean;
  checks: SelftestCheck[];
}

const CHECKPOINT = "MODEL_CHECKPOINT";
/** Measured scores may drift this much (relative) from the manifest. */
const SCORE_RTOL = 0.1;

function lastNonEmptyLine(text: string): string {
  const lines = text.split("\n").filter((l) => l.trim().length > 0);
  return lines.length > 0 ? lines[lines.length - 1]! : "";
}

function testSolution(packDir: string, manifest: PackManifest, file: string, recorded: number): {
  checks: SelftestCheck[];
  measured: number;
} {
  const checks: SelftestCheck[] = [];
  const workdir = fs.mkdtempSync(path.join(os.tmpdir(), "fixturegen-selftest-"));
  let measured = NaN;
  try {
    const inputDir = path.join(packDir, "input");
    fs.copyFileSync(path.join(packDir, file), path.join(workdir, file));
    fs.copyFileSync(path.join(inputDir, "x_train.npy"), path.join(workdir, "x_train.npy"));
    fs.copyFileSync(path.join(inputDir, "u_train.npy"), path.join(workdir, "u_train.npy"));
    const checkpointPath = path.join(workdir, CHECKPOINT);

    const validate = runPython([file, "--mode=validate"], workdir);
    const validatedOk = validate.status === 0 && fs.existsSync(checkpointPath);
    checks.push({
      name: `${file}: validate mode`,
      ok: validatedOk,
      detail: validatedOk
        ? "exit 0 and checkpoint written"
        : `exit ${validate.status}, checkpoint ${fs.existsSync(checkpointPath) ? "written" : "missing"}: ${validate.stderr.trim()}`,
    });

    fs.rmSync(checkpointPath, { force: true });
    const train = runPython([file, "--mode=train"], workdir);
    const trainedOk = train.status === 0 && fs.existsSync(checkpointPath);
    checks.push({
      name: `${file}: train mode`,
      ok: trainedOk,
      detail: trainedOk
        ? "exit 0 and checkpoint rewritten"
        : `exit ${train.status}, checkpoint ${fs.existsSync(checkpointPath) ? "written" : "missing"}: ${train.stderr.trim()}`,
    });
    if (!trainedOk) {
      return { checks, measured };
    }

    const evalScript = path.join(packDir, manifest.evaluate_script);
    const env = { DATA_DIR: inputDir };
    const first = runPython([evalScript], workdir, env);
    const second = runPython([evalScript], workdir, env);

    const marker = lastNonEmptyLine(first.stdout);
    measured = parseFinalScore(first.stdout);
    const markerOk = first.status === 0 && marker.startsWith("FINAL_SCORE: ") && Number.isFinite(measured);
    checks.push({
      name: `${file}: score marker`,
      ok: markerOk,
      detail: markerOk
        ? `final line "${marker}"`
        : `exit ${first.status}, final line "${marker}"`,
    });

    const deterministic = first.status === 0 && second.status === 0 && first.stdout === second.stdout;
    checks.push({
      name: `${file}: deterministic evaluation`,
      ok: deterministic,
      detail: deterministic
        ? "two evaluation runs printed identical output"
        : `outputs differ: "${lastNonEmptyLine(first.stdout)}" vs "${lastNonEmptyLine(second.stdout)}"`,
    });

    const drift = Math.abs(measured - recorded) / Math.abs(recorded);
    const agreeOk = Number.isFinite(measured) && drift <= SCORE_RTOL;
    checks.push({
      name: `${file}: matches recorded score`,
      ok: agreeOk,
      detail: `measured ${measured} vs recorded ${recorded} (relative drift ${Number.isFinite(drift) ? drift.toExponential(2) : "n/a"})`,
    });
    return { checks, measured };
  } finally {
    fs.rmSync(workdir, { recursive: true, force: true });
  }
}

export function runSelftest(packDirArg: string): SelftestReport {
  // Solutions run from scratch directories, so pack paths must survive
  // the cwd change.
  const packDir = path.resolve(packDirArg);
  const checks: SelftestCheck[] = [];
  let manifest: PackManifest;
  try {
    manifest = loadManifest(packDir);
  } catch (err) {
    const detail = err instanceof Error ? err.message : String(err);
    return {
      packDir,
      ok: false,
      checks: [{ name: "pack.json", ok: false, detail }],
    };
  }

  for (const entry of manifest.solutions) {
    const { checks: solutionChecks } = testSolution(packDir, manifest, entry.file, entry.score);
    checks.push(...solutionChecks);
  }

  const scores = manifest.solutions.map((s) => s.score);
  let decreasing = scores.length > 0;
  for (let i = 1; i < scores.length; i++) {
    if (!(scores[i]! < scores[i - 1]!)) {
      decreasing = false;
    }
  }
  checks.push({
    name: "score ladder",
    ok: decreasing,
    detail: decreasing
      ? `strictly improving: ${scores.map((s) => s.toPrecision(3)).join(" > ")}`
      : `recorded scores do not strictly improve: ${scores.join(", ")}`,
  });

  return { packDir, ok: checks.every((c) => c.ok), checks };
}
