/**
 * Extractor command line.
 *
 *   node dist/src/cli.js --job job.json          run an extraction job
 *   node dist/src/cli.js merge --traces t.jsonl --labels l.json [--out o.jsonl]
 *
 * Exit codes follow the primary CLI convention: 0 success, 1 usage/config
 * error, 2 data error.
 */

import * as fs from "node:fs";

import {
  JobError,
  TraceDataError,
  applyLabels,
  extractTraces,
  parseJob,
  readLabels,
  readTraceFile,
  writeTraceFile,
} from "./extract.js";

function fail(message: string, code: number): never {
  console.error(`extractor: ${message}`);
  process.exit(code);
}

function flagValue(args: string[], name: string): string | undefined {
  const at = args.indexOf(name);
  return at >= 0 && at + 1 < args.length ? args[at + 1] : undefined;
}

function runExtract(args: string[]): void {
  const jobPath = flagValue(args, "--job");
  if (!jobPath) fail("usage: cli.js --job job.json", 1);
  if (!fs.existsSync(jobPath)) fail(`job file not found: ${jobPath}`, 1);
  let raw: unknown;
  try {
    raw = JSON.parse(fs.readFileSync(jobPath, "utf-8"));
  } catch (exc) {
    fail(`job file is not valid JSON: ${(exc as Error).message}`, 1);
  }
  const job = parseJob(raw);
  const traces = extractTraces(job);
  writeTraceFile(traces, job.output_path);
  console.log(`wrote ${traces.length} traces: ${job.output_path}`);
}

function runMerge(args: string[]): void {
  const tracesPath = flagValue(args, "--traces");
  const labelsPath = flagValue(args, "--labels");
  if (!tracesPath || !labelsPath) {
    fail("usage: cli.js merge --traces traces.jsonl --labels labels.json [--out merged.jsonl]", 1);
  }
  const out = flagValue(args, "--out") ?? tracesPath;
  const traces = readTraceFile(tracesPath);
  const changed = applyLabels(traces, readLabels(labelsPath));
  writeTraceFile(traces, out);
  if (changed > 0) {
    console.error(`relabeled ${changed} already-labeled traces`);
  }
  console.log(`wrote ${traces.length} labeled traces: ${out}`);
}

function main(): void {
  const args = process.argv.slice(2);
  try {
    if (args[0] === "merge") {
      runMerge(args.slice(1));
    } else {
      runExtract(args);
    }
  } catch (exc) {
    if (exc instanceof JobError) fail(exc.message, 1);
    if (exc instanceof TraceDataError) fail(exc.message, 2);
    throw exc;
  }
}

main();
