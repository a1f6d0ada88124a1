/**
 * Trace extraction: run the bundled causal LM over a prompt file and emit
 * one trace per prompt in the streamwarden JSONL format, with per-token
 * chosen log-probability, full-vocabulary entropy (nats), top-k
 * probabilities, and one configured layer's hidden state (float32).
 * External safety labels merge in from a {trace_id: label} JSON file.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { CausalLM, entropyNats, loadModel } from "./model.js";
import { hashString, mulberry32 } from "./rng.js";

export interface ExtractionJob {
  model: string;
  prompt_file: string;
  layer_index: number;
  top_k: number;
  max_new_tokens: number;
  temperature: number;
  label_file?: string;
  output_path: string;
  seed?: number;
  task?: string;
}

export interface TraceStep {
  token_id: number;
  token_text: string;
  chosen_logprob: number;
  entropy: number;
  topk: [number, number][];
  hidden: number[];
}

export interface Trace {
  trace_id: string;
  task: string;
  model_name: string;
  prompt: string;
  steps: TraceStep[];
  label: string;
  oracle_meta: Record<string, unknown>;
}

export type Labels = Record<string, string>;

const TASKS = ["question_answering", "text_continuation", "machine_translation", "code_generation"];

export class JobError extends Error {}
export class TraceDataError extends Error {}

export function parseJob(raw: unknown): ExtractionJob {
  if (typeof raw !== "object" || raw === null) {
    throw new JobError("job must be a JSON object");
  }
  const obj = raw as Record<string, unknown>;
  const required = ["model", "prompt_file", "layer_index", "top_k", "max_new_tokens", "temperature", "output_path"];
  for (const key of required) {
    if (!(key in obj)) throw new JobError(`job missing required key ${JSON.stringify(key)}`);
  }
  const job: ExtractionJob = {
    model: String(obj.model),
    prompt_file: String(obj.prompt_file),
    layer_index: Number(obj.layer_index),
    top_k: Number(obj.top_k),
    max_new_tokens: Number(obj.max_new_tokens),
    temperature: Number(obj.temperature),
    label_file: obj.label_file === undefined || obj.label_file === null ? undefined : String(obj.label_file),
    output_path: String(obj.output_path),
    seed: obj.seed === undefined ? 0 : Number(obj.seed),
    task: obj.task === undefined ? "text_continuation" : String(obj.task),
  };
  if (!Number.isInteger(job.top_k) || job.top_k < 0) {
    throw new JobError(`top_k must be an integer >= 0, got ${obj.top_k}`);
  }
  if (job.max_new_tokens < 1) throw new JobError("max_new_tokens must be >= 1");
  if (job.temperature < 0) throw new JobError("temperature must be >= 0");
  if (!TASKS.includes(job.task!)) {
    throw new JobError(`task must be one of ${TASKS.join(", ")}`);
  }
  return job;
}

function topKEntries(probs: Float64Array, k: number): [number, number][] {
  const order = Array.from(probs.keys()).sort((a, b) => probs[b] - probs[a] || a - b);
  const take = k === 0 ? probs.length : Math.min(k, probs.length);
  return order.slice(0, take).map((id) => [id, probs[id]]);
}

function float32(values: Float64Array): number[] {
  return Array.from(values, (v) => Math.fround(v));
}

export function extractTrace(
  model: CausalLM,
  prompt: string,
  traceId: string,
  job: ExtractionJob,
  label: string,
): Trace | null {
  const layer = model.resolveLayerIndex(job.layer_index);
  let tokens = model.tokenizer.encode(prompt);
  if (tokens.length === 0) tokens = [model.tokenizer.unkId];
  if (tokens.length + 1 > model.config.maxSeq) {
    console.warn(
      `skipping ${traceId}: prompt of ${tokens.length} tokens exceeds context ${model.config.maxSeq}`,
    );
    return null;
  }
  const rng = mulberry32(((job.seed ?? 0) >>> 0) ^ hashString(traceId));
  const steps: TraceStep[] = [];
  for (let produced = 0; produced < job.max_new_tokens; produced++) {
    if (tokens.length + 1 > model.config.maxSeq) break;
    const { probs, hiddenLayers } = model.forward(tokens);
    const chosen = model.chooseToken(probs, job.temperature, rng);
    steps.push({
      token_id: chosen,
      token_text: model.tokenizer.decodeToken(chosen),
      // ln of the untempered model probability; clamped away from -inf
      chosen_logprob: Math.max(Math.log(probs[chosen]), -745.0),
      entropy: entropyNats(probs),
      topk: topKEntries(probs, job.top_k),
      hidden: float32(hiddenLayers[layer]),
    });
    tokens.push(chosen);
    if (chosen === model.tokenizer.eosId) break;
  }
  return {
    trace_id: traceId,
    task: job.task!,
    model_name: job.model,
    prompt,
    steps,
    label,
    oracle_meta: {
      extractor: "streamwarden-extractor",
      hidden_layer_index: layer,
      hidden_layer_repr: model.layerDescription(layer),
      temperature: job.temperature,
      top_k: job.top_k,
      seed: job.seed ?? 0,
      label_source: label === "" ? "missing" : undefined,
    },
  };
}

export function readLabels(labelFile: string): Labels {
  if (!fs.existsSync(labelFile)) {
    throw new TraceDataError(`label file not found: ${labelFile}`);
  }
  const labels = JSON.parse(fs.readFileSync(labelFile, "utf-8")) as Labels;
  for (const [id, label] of Object.entries(labels)) {
    if (label !== "SAFE" && label !== "UNSAFE") {
      throw new TraceDataError(`label for ${id} must be exactly "SAFE" or "UNSAFE", got ${JSON.stringify(label)}`);
    }
  }
  return labels;
}

export function applyLabels(traces: Trace[], labels: Labels): number {
  const missing = traces.filter((t) => !(t.trace_id in labels)).map((t) => t.trace_id);
  if (missing.length > 0) {
    throw new TraceDataError(`label file is missing trace ids: ${missing.join(", ")}`);
  }
  let changed = 0;
  for (const trace of traces) {
    const next = labels[trace.trace_id];
    if (trace.label !== "" && trace.label !== next) changed++;
    trace.label = next;
    delete trace.oracle_meta.label_source;
  }
  return changed;
}

export function writeTraceFile(traces: Trace[], outputPath: string): void {
  fs.mkdirSync(path.dirname(path.resolve(outputPath)), { recursive: true });
  const lines = traces.map((t) =>
    JSON.stringify(t, (_key, value) => (value === undefined ? undefined : value)),
  );
  fs.writeFileSync(outputPath, lines.join("\n") + "\n", "utf-8");
}

export function readTraceFile(tracePath: string): Trace[] {
  if (!fs.existsSync(tracePath)) {
    throw new TraceDataError(`trace file not found: ${tracePath}`);
  }
  return fs
    .readFileSync(tracePath, "utf-8")
    .split("\n")
    .filter((line) => line.trim().length > 0)
    .map((line, i) => {
      try {
        return JSON.parse(line) as Trace;
      } catch (exc) {
        throw new TraceDataError(`line ${i + 1}: invalid JSON (${(exc as Error).message})`);
      }
    });
}

export function extractTraces(job: ExtractionJob): Trace[] {
  if (!fs.existsSync(job.prompt_file)) {
    throw new TraceDataError(`prompt file not found: ${job.prompt_file}`);
  }
  const prompts = fs
    .readFileSync(job.prompt_file, "utf-8")
    .split("\n")
    .map((p) => p.trim())
    .filter((p) => p.length > 0);
  if (prompts.length === 0) {
    throw new TraceDataError(`prompt file ${job.prompt_file} holds no prompts`);
  }
  const model = loadModel(job.model);
  if (job.top_k > model.tokenizer.vocabSize) {
    throw new JobError(
      `top_k ${job.top_k} exceeds vocabulary size ${model.tokenizer.vocabSize}`,
    );
  }
  model.resolveLayerIndex(job.layer_index); // validate before any work
  const labels = job.label_file ? readLabels(job.label_file) : null;
  const traces: Trace[] = [];
  for (const [index, prompt] of prompts.entries()) {
    const traceId = `${job.model}-${String(index).padStart(4, "0")}`;
    // unlabeled extraction writes a placeholder; merge labels before any
    // metric use (oracle_meta.label_source marks it)
    const trace = extractTrace(model, prompt, traceId, job, labels ? "" : "SAFE");
    if (trace === null) continue;
    if (!labels) trace.oracle_meta.label_source = "placeholder";
    traces.push(trace);
  }
  if (labels) {
    applyLabels(traces, labels);
  }
  return traces;
}
