import * as tf from "@tensorflow/tfjs";
import { readFileSync, writeFileSync } from "node:fs";
import { CLASSIFIABLE_TOPICS } from "./corpus.js";

export interface MultiTaskModelSpec {
  vocabSize: number; // hashed input vocabulary
  embedDim: number;
  sharedDim: number; // pooled shared-feature width, the wire "features" dim
  maxLen: number; // encoder input clip length, tokens
  decoder: boolean; // rewrite head present?
  decoderDim: number;
  maxDecodeLen: number;
  alternation: "per-batch" | "per-epoch";
  seed: number;
}

export const DEFAULT_SPEC: MultiTaskModelSpec = {
  vocabSize: 512,
  embedDim: 16,
  sharedDim: 32,
  maxLen: 32,
  decoder: true,
  decoderDim: 24,
  maxDecodeLen: 12,
  alternation: "per-batch",
  seed: 7,
};

export const PAD = 0;
export const BOS = 1;
export const EOS = 2;
export const UNK = 3;
const RESERVED = ["<pad>", "<s>", "</s>", "<unk>"];

/** FNV-1a 32-bit, for hashing encoder input tokens into a fixed vocab. */
export function fnv1a32(text: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h >>> 0;
}

export function words(text: string): string[] {
  return text.toLowerCase().split(/\s+/).filter(Boolean);
}

/** Hash words into [1, vocabSize) — 0 is reserved for padding. */
export function encodeIds(text: string, spec: MultiTaskModelSpec): number[] {
  const ids = words(text).map((w) => 1 + (fnv1a32(w) % (spec.vocabSize - 1)));
  const clipped = ids.slice(0, spec.maxLen);
  while (clipped.length < spec.maxLen) clipped.push(PAD);
  return clipped;
}

/** Closed output vocabulary for the decoder, built from training rewrites. */
export function buildOutVocab(texts: string[], cap = 512): string[] {
  const counts = new Map<string, number>();
  for (const t of texts) for (const w of words(t)) counts.set(w, (counts.get(w) ?? 0) + 1);
  const sorted = [...counts.entries()].sort((a, b) => b[1] - a[1] || (a[0] < b[0] ? -1 : 1));
  return [...RESERVED, ...sorted.slice(0, cap - RESERVED.length).map(([w]) => w)];
}

export interface ModelBundle {
  spec: MultiTaskModelSpec;
  outVocab: string[];
  encoder: tf.LayersModel;
  heads: Record<string, tf.LayersModel>; // topic + three binary heads
  decoder: tf.LayersModel | null;
}

export function buildBundle(spec: MultiTaskModelSpec, outVocab: string[]): ModelBundle {
  let seed = spec.seed;
  const init = () => tf.initializers.glorotUniform({ seed: seed++ });

  const ids = tf.input({ shape: [spec.maxLen], dtype: "int32" });
  const embedded = tf.layers
    .embedding({
      inputDim: spec.vocabSize,
      outputDim: spec.embedDim,
      embeddingsInitializer: init(),
      name: "enc_embed",
    })
    .apply(ids) as tf.SymbolicTensor;
  const pooled = tf.layers.globalAveragePooling1d({}).apply(embedded) as tf.SymbolicTensor;
  const shared = tf.layers
    .dense({ units: spec.sharedDim, activation: "tanh", kernelInitializer: init(), name: "enc_shared" })
    .apply(pooled) as tf.SymbolicTensor;
  const encoder = tf.model({ inputs: ids, outputs: shared, name: "encoder" });

  const head = (name: string, units: number) => {
    const feat = tf.input({ shape: [spec.sharedDim] });
    const out = tf.layers
      .dense({ units, activation: "softmax", kernelInitializer: init(), name: `${name}_out` })
      .apply(feat) as tf.SymbolicTensor;
    return tf.model({ inputs: feat, outputs: out, name });
  };
  const heads: Record<string, tf.LayersModel> = {
    importance: head("importance", 2),
    topic: head("topic", CLASSIFIABLE_TOPICS.length),
    risk: head("risk", 2),
    sensitivity: head("sensitivity", 2),
  };

  let decoder: tf.LayersModel | null = null;
  if (spec.decoder) {
    // Rewrites are generated from the pooled shared features (tiled across
    // steps) plus teacher-forced previous tokens; no cross-attention at this
    // scale.
    const prev = tf.input({ shape: [spec.maxDecodeLen], dtype: "int32" });
    const feat = tf.input({ shape: [spec.sharedDim] });
    const prevEmbedded = tf.layers
      .embedding({
        inputDim: outVocab.length,
        outputDim: spec.embedDim,
        embeddingsInitializer: init(),
        name: "dec_embed",
      })
      .apply(prev) as tf.SymbolicTensor;
    const tiled = tf.layers.repeatVector({ n: spec.maxDecodeLen }).apply(feat) as tf.SymbolicTensor;
    const merged = tf.layers.concatenate({ axis: -1 }).apply([prevEmbedded, tiled]) as tf.SymbolicTensor;
    const states = tf.layers
      .lstm({
        units: spec.decoderDim,
        returnSequences: true,
        kernelInitializer: init(),
        recurrentInitializer: init(),
        name: "dec_lstm",
      })
      .apply(merged) as tf.SymbolicTensor;
    const logits = tf.layers
      .timeDistributed({
        layer: tf.layers.dense({ units: outVocab.length, activation: "softmax", kernelInitializer: init() }),
        name: "dec_out",
      })
      .apply(states) as tf.SymbolicTensor;
    decoder = tf.model({ inputs: [prev, feat], outputs: logits, name: "decoder" });
  }
  return { spec, outVocab, encoder, heads, decoder };
}

export function encodeFeatures(bundle: ModelBundle, text: string): number[] {
  return tf.tidy(() => {
    const ids = tf.tensor2d([encodeIds(text, bundle.spec)], [1, bundle.spec.maxLen], "int32");
    const out = bundle.encoder.predict(ids) as tf.Tensor2D;
    return Array.from(out.dataSync());
  });
}

export function classifyScores(bundle: ModelBundle, task: string, features: number[]): number[] {
  return tf.tidy(() => {
    const feat = tf.tensor2d([features], [1, bundle.spec.sharedDim]);
    const out = bundle.heads[task].predict(feat) as tf.Tensor2D;
    return Array.from(out.dataSync());
  });
}

/** Greedy left-to-right decode from pooled features. */
export function greedyRewrite(bundle: ModelBundle, text: string): string {
  if (!bundle.decoder) throw new Error("rewrite head not trained");
  const { spec, outVocab, decoder } = bundle;
  const features = encodeFeatures(bundle, text);
  const tokens: number[] = [BOS];
  for (let step = 0; step < spec.maxDecodeLen - 1; step++) {
    const next = tf.tidy(() => {
      const prev = tokens.slice(0, spec.maxDecodeLen);
      while (prev.length < spec.maxDecodeLen) prev.push(PAD);
      const out = decoder.predict([
        tf.tensor2d([prev], [1, spec.maxDecodeLen], "int32"),
        tf.tensor2d([features], [1, spec.sharedDim]),
      ]) as tf.Tensor3D;
      const stepProbs = out.slice([0, step, 0], [1, 1, outVocab.length]).reshape([outVocab.length]);
      return stepProbs.argMax().dataSync()[0];
    });
    if (next === EOS || next === PAD) break;
    tokens.push(next);
  }
  const wordsOut = tokens.slice(1).filter((t) => t > UNK).map((t) => outVocab[t]);
  return wordsOut.length > 0 ? wordsOut.join(" ") : text;
}

interface SavedWeights {
  [modelName: string]: { shape: number[]; values: number[] }[];
}

export function saveBundle(bundle: ModelBundle, path: string): void {
  const weights: SavedWeights = {};
  const models: [string, tf.LayersModel][] = [
    ["encoder", bundle.encoder],
    ...Object.entries(bundle.heads),
  ];
  if (bundle.decoder) models.push(["decoder", bundle.decoder]);
  for (const [name, model] of models) {
    weights[name] = model.getWeights().map((w) => ({
      shape: w.shape.slice(),
      values: Array.from(w.dataSync()),
    }));
  }
  writeFileSync(
    path,
    JSON.stringify({ format: "modelshim-1", spec: bundle.spec, outVocab: bundle.outVocab, weights }),
  );
}

export function loadBundle(path: string): ModelBundle {
  const raw = JSON.parse(readFileSync(path, "utf-8"));
  if (raw.format !== "modelshim-1") throw new Error(`unknown bundle format ${raw.format}`);
  const bundle = buildBundle(raw.spec, raw.outVocab);
  const models: [string, tf.LayersModel][] = [
    ["encoder", bundle.encoder],
    ...Object.entries(bundle.heads),
  ];
  if (bundle.decoder) models.push(["decoder", bundle.decoder]);
  for (const [name, model] of models) {
    const saved = raw.weights[name];
    if (!saved) throw new Error(`bundle is missing weights for ${name}`);
    model.setWeights(saved.map((w: { shape: number[]; values: number[] }) => tf.tensor(w.values, w.shape)));
  }
  return bundle;
}
