/**
 * A small decoder-only transformer with seeded, bundled weights.
 *
 * The point is instrumentation fidelity, not language quality: every forward
 * pass exposes the full-vocabulary softmax and the residual-stream hidden
 * states per layer, so traces carry exact chosen-token log-probabilities,
 * full-distribution entropies, top-k lists, and one configured layer's
 * activation vector. All math runs in float64; only serialized hidden
 * states are rounded to float32.
 */

import { gaussianMatrix, mulberry32, hashString, type Rng } from "./rng.js";
import { Tokenizer } from "./tokenizer.js";

export interface ModelConfig {
  name: string;
  dModel: number;
  nLayers: number;
  nHeads: number;
  dFF: number;
  maxSeq: number;
  seed: number;
}

const MODEL_REGISTRY: Record<string, Omit<ModelConfig, "name">> = {
  "tiny-lm": { dModel: 16, nLayers: 2, nHeads: 2, dFF: 32, maxSeq: 96, seed: 1234 },
  "tiny-lm-wide": { dModel: 32, nLayers: 3, nHeads: 4, dFF: 64, maxSeq: 128, seed: 5678 },
};

export function knownModels(): string[] {
  return Object.keys(MODEL_REGISTRY);
}

interface LayerWeights {
  ln1Gamma: Float64Array;
  ln1Beta: Float64Array;
  wq: Float64Array;
  wk: Float64Array;
  wv: Float64Array;
  wo: Float64Array;
  ln2Gamma: Float64Array;
  ln2Beta: Float64Array;
  w1: Float64Array;
  b1: Float64Array;
  w2: Float64Array;
  b2: Float64Array;
}

export interface StepDistribution {
  /** softmax over the full vocabulary at the next-token position */
  probs: Float64Array;
  /** residual stream at the last position: one vector per candidate layer */
  hiddenLayers: Float64Array[];
}

function layerNorm(x: Float64Array, gamma: Float64Array, beta: Float64Array): Float64Array {
  const n = x.length;
  let mean = 0;
  for (let i = 0; i < n; i++) mean += x[i];
  mean /= n;
  let variance = 0;
  for (let i = 0; i < n; i++) variance += (x[i] - mean) ** 2;
  variance /= n;
  const inv = 1.0 / Math.sqrt(variance + 1e-5);
  const out = new Float64Array(n);
  for (let i = 0; i < n; i++) out[i] = gamma[i] * (x[i] - mean) * inv + beta[i];
  return out;
}

/** y = x @ W where W is [dIn, dOut] row-major. */
function matvec(x: Float64Array, w: Float64Array, dIn: number, dOut: number): Float64Array {
  const out = new Float64Array(dOut);
  for (let i = 0; i < dIn; i++) {
    const xi = x[i];
    if (xi === 0) continue;
    const row = i * dOut;
    for (let j = 0; j < dOut; j++) out[j] += xi * w[row + j];
  }
  return out;
}

export function softmax(logits: Float64Array): Float64Array {
  let max = -Infinity;
  for (const v of logits) if (v > max) max = v;
  const out = new Float64Array(logits.length);
  let total = 0;
  for (let i = 0; i < logits.length; i++) {
    const e = Math.exp(logits[i] - max);
    out[i] = e;
    total += e;
  }
  for (let i = 0; i < logits.length; i++) out[i] /= total;
  return out;
}

export function entropyNats(probs: Float64Array): number {
  let h = 0;
  for (const p of probs) {
    if (p > 0) h -= p * Math.log(p);
  }
  return Math.max(h, 0);
}

export class CausalLM {
  readonly config: ModelConfig;
  readonly tokenizer: Tokenizer;
  private readonly tokEmb: Float64Array;
  private readonly posEmb: Float64Array;
  private readonly layers: LayerWeights[];
  private readonly lnFGamma: Float64Array;
  private readonly lnFBeta: Float64Array;

  constructor(config: ModelConfig) {
    if (config.dModel % config.nHeads !== 0) {
      throw new Error("dModel must be divisible by nHeads");
    }
    this.config = config;
    this.tokenizer = new Tokenizer();
    const rng = mulberry32(config.seed ^ hashString(config.name));
    const d = config.dModel;
    const vocab = this.tokenizer.vocabSize;
    const std = 0.4;
    this.tokEmb = gaussianMatrix(rng, vocab, d, std);
    this.posEmb = gaussianMatrix(rng, config.maxSeq, d, std * 0.5);
    this.layers = [];
    for (let l = 0; l < config.nLayers; l++) {
      this.layers.push({
        ln1Gamma: new Float64Array(d).fill(1),
        ln1Beta: new Float64Array(d),
        wq: gaussianMatrix(rng, d, d, std / Math.sqrt(d)),
        wk: gaussianMatrix(rng, d, d, std / Math.sqrt(d)),
        wv: gaussianMatrix(rng, d, d, std / Math.sqrt(d)),
        wo: gaussianMatrix(rng, d, d, std / Math.sqrt(d)),
        ln2Gamma: new Float64Array(d).fill(1),
        ln2Beta: new Float64Array(d),
        w1: gaussianMatrix(rng, d, config.dFF, std / Math.sqrt(d)),
        b1: new Float64Array(config.dFF),
        w2: gaussianMatrix(rng, config.dFF, d, std / Math.sqrt(config.dFF)),
        b2: new Float64Array(d),
      });
    }
    this.lnFGamma = new Float64Array(d).fill(1);
    this.lnFBeta = new Float64Array(d);
  }

  /** Residual-stream layers observable per position: each block + final LN. */
  get nHiddenLayers(): number {
    return this.config.nLayers + 1;
  }

  resolveLayerIndex(index: number): number {
    const n = this.nHiddenLayers;
    const resolved = index < 0 ? n + index : index;
    if (resolved < 0 || resolved >= n) {
      throw new Error(
        `layer index ${index} invalid for model ${this.config.name} with ${n} observable layers`,
      );
    }
    return resolved;
  }

  layerDescription(resolvedIndex: number): string {
    return resolvedIndex === this.config.nLayers
      ? "post_final_layernorm"
      : `post_block_${resolvedIndex}`;
  }

  /**
   * Full forward pass over the token sequence; returns the next-token
   * distribution and the per-layer hidden states at the last position.
   */
  forward(tokens: number[]): StepDistribution {
    const { dModel: d, nHeads, maxSeq } = this.config;
    const dHead = d / nHeads;
    const t = tokens.length;
    if (t === 0) throw new Error("forward needs at least one token");
    if (t > maxSeq) throw new Error(`sequence of ${t} exceeds context ${maxSeq}`);

    // residual stream, one Float64Array per position
    let stream: Float64Array[] = tokens.map((tok, pos) => {
      const x = new Float64Array(d);
      for (let i = 0; i < d; i++) {
        x[i] = this.tokEmb[tok * d + i] + this.posEmb[pos * d + i];
      }
      return x;
    });

    const hiddenLayers: Float64Array[] = [];
    for (const layer of this.layers) {
      // attention over normed inputs
      const normed = stream.map((x) => layerNorm(x, layer.ln1Gamma, layer.ln1Beta));
      const qs = normed.map((x) => matvec(x, layer.wq, d, d));
      const ks = normed.map((x) => matvec(x, layer.wk, d, d));
      const vs = normed.map((x) => matvec(x, layer.wv, d, d));
      const attnOut: Float64Array[] = [];
      for (let pos = 0; pos < t; pos++) {
        const merged = new Float64Array(d);
        for (let h = 0; h < nHeads; h++) {
          const offset = h * dHead;
          const scores = new Float64Array(pos + 1);
          for (let j = 0; j <= pos; j++) {
            let dot = 0;
            for (let i = 0; i < dHead; i++) {
              dot += qs[pos][offset + i] * ks[j][offset + i];
            }
            scores[j] = dot / Math.sqrt(dHead);
          }
          const weights = softmax(scores);
          for (let j = 0; j <= pos; j++) {
            const wj = weights[j];
            for (let i = 0; i < dHead; i++) {
              merged[offset + i] += wj * vs[j][offset + i];
            }
          }
        }
        attnOut.push(matvec(merged, layer.wo, d, d));
      }
      stream = stream.map((x, pos) => {
        const out = new Float64Array(d);
        for (let i = 0; i < d; i++) out[i] = x[i] + attnOut[pos][i];
        return out;
      });
      // feed-forward
      stream = stream.map((x) => {
        const normed2 = layerNorm(x, layer.ln2Gamma, layer.ln2Beta);
        const hiddenFF = matvec(normed2, layer.w1, d, this.config.dFF);
        for (let i = 0; i < hiddenFF.length; i++) {
          hiddenFF[i] = Math.max(0, hiddenFF[i] + layer.b1[i]);
        }
        const back = matvec(hiddenFF, layer.w2, this.config.dFF, d);
        const out = new Float64Array(d);
        for (let i = 0; i < d; i++) out[i] = x[i] + back[i] + layer.b2[i];
        return out;
      });
      hiddenLayers.push(stream[t - 1]);
    }

    const finalNormed = layerNorm(stream[t - 1], this.lnFGamma, this.lnFBeta);
    hiddenLayers.push(finalNormed);

    // tied-embedding head
    const vocab = this.tokenizer.vocabSize;
    const logits = new Float64Array(vocab);
    for (let tok = 0; tok < vocab; tok++) {
      let dot = 0;
      for (let i = 0; i < d; i++) dot += finalNormed[i] * this.tokEmb[tok * d + i];
      logits[tok] = dot;
    }
    return { probs: softmax(logits), hiddenLayers };
  }

  /** Greedy at temperature 0, else seeded sampling at softmax(logits/T). */
  chooseToken(probs: Float64Array, temperature: number, rng: Rng): number {
    if (temperature === 0) {
      let best = 0;
      for (let i = 1; i < probs.length; i++) {
        if (probs[i] > probs[best]) best = i;
      }
      return best;
    }
    const logits = new Float64Array(probs.length);
    for (let i = 0; i < probs.length; i++) {
      logits[i] = Math.log(Math.max(probs[i], 1e-300)) / temperature;
    }
    const tempered = softmax(logits);
    const draw = rng();
    let cumulative = 0;
    for (let i = 0; i < tempered.length; i++) {
      cumulative += tempered[i];
      if (draw < cumulative) return i;
    }
    return tempered.length - 1;
  }
}

export function loadModel(name: string): CausalLM {
  const preset = MODEL_REGISTRY[name];
  if (!preset) {
    throw new Error(`unknown model ${JSON.stringify(name)}; known: ${knownModels().join(", ")}`);
  }
  return new CausalLM({ name, ...preset });
}
