#!/usr/bin/env node
/**
 * fixturegen command line.
 *
 *   fixturegen generate <out-dir> [--seed N] [--points N] [--force]
 *   fixturegen selftest <pack-dir>
 *
 * generate writes a complete pack and records measured scores in its
 * pack.json; selftest re-runs an existing pack's canned solutions and
 * verifies the recorded contract still holds.
 */

import { parseArgs } from "node:util";

import { DEFAULT_PARAMS } from "./dataset.js";
import { writePack } from "./pack.js";
import { runSelftest } from "./selftest.js";

function usage(): never {
  console.error("usage: fixturegen generate <out-dir> [--seed N] [--points N] [--force]");
  console.error("       fixturegen selftest <pack-dir>");
  process.exit(2);
}

function generate(argv: string[]): number {
  const { values, positionals } = parseArgs({
    args: argv,
    options: {
      seed: { type: "string" },
      points: { type: "string" },
      force: { type: "boolean", default: false },
    },
    allowPositionals: true,
  });
  const outDir = positionals[0];
  if (!outDir || positionals.length > 1) {
    usage();
  }
  const seed = values.seed === undefined ? DEFAULT_PARAMS.seed : Number.parseInt(values.seed, 10);
  const points = values.points === undefined ? DEFAULT_PARAMS.points : Number.parseInt(values.points, 10);
  if (!Number.isFinite(seed) || !Number.isFinite(points) || points < 8) {
    usage();
  }
  const manifest = writePack(outDir, { seed, points }, { force: values.force });
  console.log(`wrote ${manifest.name} to ${outDir} (seed ${seed}, ${points} points per split)`);
  for (const entry of manifest.solutions) {
    console.log(`  ${entry.file}: ${entry.score}`);
  }
  return 0;
}

function selftest(argv: string[]): number {
  const { positionals } = parseArgs({ args: argv, options: {}, allowPositionals: true });
  const packDir = positionals[0];
  if (!packDir || positionals.length > 1) {
    usage();
  }
  const report = runSelftest(packDir);
  for (const check of report.checks) {
    console.log(`${check.ok ? "ok  " : "FAIL"} ${check.name}: ${check.detail}`);
  }
  if (!report.ok) {
    const failed = report.checks.filter((c) => !c.ok).length;
    console.error(`selftest failed: ${failed} of ${report.checks.length} checks`);
    return 1;
  }
  console.log(`selftest passed: ${report.checks.length} checks`);
  return 0;
}

async function main(): Promise<void> {
  const [command, ...rest] = process.argv.slice(2);
  switch (command) {
    case "generate":
      process.exitCode = generate(rest);
      break;
    case "selftest":
      process.exitCode = selftest(rest);
      break;
    default:
      usage();
  }
}

main().catch((err) => {
  console.error(err instanceof Error ? err.message : String(err));
  process.exit(1);
});
