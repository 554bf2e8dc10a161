import * as tf from "@tensorflow/tfjs";
import {
  ALL_TASKS,
  BINARY_TASKS,
  CLASSIFIABLE_TOPICS,
  CorpusSentence,
  TaskName,
  binaryLabel,
  loadCorpus,
  taskPopulation,
  topicIndex,
} from "./corpus.js";
import {
  BOS,
  EOS,
  DEFAULT_SPEC,
  ModelBundle,
  MultiTaskModelSpec,
  PAD,
  UNK,
  buildBundle,
  buildOutVocab,
  encodeIds,
  saveBundle,
  words,
} from "./model.js";

export class DataMissing extends Error {
  constructor(public readonly task: TaskName) {
    super(`no training data for task ${task}`);
  }
}

export interface TrainOptions {
  epochs: number;
  batchSize: number;
  learningRate: number;
  valFraction: number;
}

export const DEFAULT_TRAIN: TrainOptions = {
  epochs: 2,
  batchSize: 16,
  learningRate: 0.02,
  valFraction: 0.1,
};

export interface TrainResult {
  bundle: ModelBundle;
  /** validationLosses[task][e] is the loss after e epochs; index 0 is untrained. */
  validationLosses: Record<string, number[]>;
}

/** Deterministic PRNG so shuffles repeat per seed. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function shuffled<T>(items: T[], rand: () => number): T[] {
  const out = items.slice();
  for (let i = out.length - 1; i > 0; i--) {
    const j = Math.floor(rand() * (i + 1));
    [out[i], out[j]] = [out[j], out[i]];
  }
  return out;
}

interface TaskData {
  inputs: number[][]; // encoder ids
  labels: number[]; // class index (classification tasks)
  decIn: number[][]; // teacher-forced tokens (rewrite)
  decTarget: number[][];
}

function decoderTokens(text: string, outVocab: string[], maxLen: number): number[] {
  const index = new Map(outVocab.map((w, i) => [w, i]));
  const ids = words(text).map((w) => index.get(w) ?? UNK);
  return [BOS, ...ids.slice(0, maxLen - 2), EOS];
}

function prepareTask(
  task: TaskName,
  population: CorpusSentence[],
  spec: MultiTaskModelSpec,
  outVocab: string[],
): TaskData {
  const data: TaskData = { inputs: [], labels: [], decIn: [], decTarget: [] };
  for (const s of population) {
    data.inputs.push(encodeIds(s.text, spec));
    if (task === "topic") {
      data.labels.push(topicIndex(s));
    } else if (task === "rewrite") {
      const tokens = decoderTokens(s.rewritten as string, outVocab, spec.maxDecodeLen + 1);
      const padded = (xs: number[]) => {
        const out = xs.slice(0, spec.maxDecodeLen);
        while (out.length < spec.maxDecodeLen) out.push(PAD);
        return out;
      };
      data.decIn.push(padded(tokens.slice(0, -1)));
      data.decTarget.push(padded(tokens.slice(1)));
    } else {
      data.labels.push(binaryLabel(s, task));
    }
  }
  return data;
}

/** -log p(target) with a clip; heads emit softmax directly. */
function crossEntropy(probs: tf.Tensor, oneHot: tf.Tensor): tf.Tensor {
  return probs.clipByValue(1e-7, 1).log().mul(oneHot).sum(-1).neg();
}

function classificationLoss(bundle: ModelBundle, task: string, inputs: number[][], labels: number[]): tf.Scalar {
  const spec = bundle.spec;
  const ids = tf.tensor2d(inputs, [inputs.length, spec.maxLen], "int32");
  const features = bundle.encoder.apply(ids) as tf.Tensor2D;
  const probs = bundle.heads[task].apply(features) as tf.Tensor2D;
  const classes = task === "topic" ? CLASSIFIABLE_TOPICS.length : 2;
  const oneHot = tf.oneHot(tf.tensor1d(labels, "int32"), classes);
  return crossEntropy(probs, oneHot).mean().asScalar();
}

function rewriteLoss(bundle: ModelBundle, inputs: number[][], decIn: number[][], decTarget: number[][]): tf.Scalar {
  const spec = bundle.spec;
  const n = inputs.length;
  const ids = tf.tensor2d(inputs, [n, spec.maxLen], "int32");
  const features = bundle.encoder.apply(ids) as tf.Tensor2D;
  const prev = tf.tensor2d(decIn, [n, spec.maxDecodeLen], "int32");
  const probs = (bundle.decoder as tf.LayersModel).apply([prev, features]) as tf.Tensor3D;
  const target = tf.tensor2d(decTarget, [n, spec.maxDecodeLen], "int32");
  const oneHot = tf.oneHot(target, bundle.outVocab.length);
  const perStep = crossEntropy(probs, oneHot); // [n, steps]
  const mask = target.notEqual(tf.scalar(PAD, "int32")).cast("float32");
  return perStep.mul(mask).sum().div(mask.sum().maximum(1)).asScalar();
}

function taskLoss(bundle: ModelBundle, task: TaskName, data: TaskData, pick: number[]): tf.Scalar {
  const inputs = pick.map((i) => data.inputs[i]);
  if (task === "rewrite") {
    return rewriteLoss(bundle, inputs, pick.map((i) => data.decIn[i]), pick.map((i) => data.decTarget[i]));
  }
  return classificationLoss(bundle, task, inputs, pick.map((i) => data.labels[i]));
}

function trainableVars(bundle: ModelBundle, task: TaskName): tf.Variable[] {
  const models = [bundle.encoder, task === "rewrite" ? (bundle.decoder as tf.LayersModel) : bundle.heads[task]];
  return models.flatMap((m) =>
    m.trainableWeights.map((w) => (w as unknown as { val: tf.Variable }).val),
  );
}

export function trainMultiTask(
  sentences: CorpusSentence[],
  spec: MultiTaskModelSpec = DEFAULT_SPEC,
  options: TrainOptions = DEFAULT_TRAIN,
): TrainResult {
  const tasks: TaskName[] = spec.decoder ? [...ALL_TASKS] : [...ALL_TASKS].filter((t) => t !== "rewrite");
  const populations = new Map<TaskName, CorpusSentence[]>();
  for (const task of tasks) {
    const pop = taskPopulation(sentences, task);
    if (pop.length === 0) throw new DataMissing(task);
    populations.set(task, pop);
  }

  const outVocab = buildOutVocab((populations.get("rewrite") ?? []).map((s) => s.rewritten as string));
  const bundle = buildBundle(spec, outVocab);
  const rand = mulberry32(spec.seed);

  const train = new Map<TaskName, TaskData>();
  const val = new Map<TaskName, TaskData>();
  for (const task of tasks) {
    const pop = shuffled(populations.get(task) as CorpusSentence[], rand);
    const nVal = Math.max(1, Math.floor(pop.length * options.valFraction));
    val.set(task, prepareTask(task, pop.slice(0, nVal), spec, outVocab));
    train.set(task, prepareTask(task, pop.slice(nVal), spec, outVocab));
  }

  const losses: Record<string, number[]> = Object.fromEntries(tasks.map((t) => [t, []]));
  const validate = () => {
    for (const task of tasks) {
      const data = val.get(task) as TaskData;
      const loss = tf.tidy(() => taskLoss(bundle, task, data, data.inputs.map((_, i) => i)).dataSync()[0]);
      losses[task].push(loss);
    }
  };
  validate(); // epoch 0: untrained baseline

  // tfjs Adam tracks moments positionally, so alternating variable lists on a
  // single optimizer mixes shapes across heads; give each task its own.
  const optimizers = new Map<TaskName, tf.Optimizer>(
    tasks.map((t) => [t, tf.train.adam(options.learningRate)]),
  );
  const batchesPerEpoch = Math.ceil(
    Math.max(...tasks.map((t) => (train.get(t) as TaskData).inputs.length)) / options.batchSize,
  );
  const cursors = new Map<TaskName, { order: number[]; pos: number }>(
    tasks.map((t) => [t, { order: [], pos: 0 }]),
  );

  const nextBatch = (task: TaskName): number[] => {
    const data = train.get(task) as TaskData;
    const cursor = cursors.get(task) as { order: number[]; pos: number };
    const pick: number[] = [];
    while (pick.length < Math.min(options.batchSize, data.inputs.length)) {
      if (cursor.pos >= cursor.order.length) {
        cursor.order = shuffled(data.inputs.map((_, i) => i), rand);
        cursor.pos = 0;
      }
      pick.push(cursor.order[cursor.pos++]);
    }
    return pick;
  };

  const step = (task: TaskName) => {
    const pick = nextBatch(task);
    (optimizers.get(task) as tf.Optimizer).minimize(
      () => taskLoss(bundle, task, train.get(task) as TaskData, pick),
      false,
      trainableVars(bundle, task),
    );
  };

  for (let epoch = 0; epoch < options.epochs; epoch++) {
    if (spec.alternation === "per-batch") {
      for (let b = 0; b < batchesPerEpoch; b++) for (const task of tasks) step(task);
    } else {
      for (const task of tasks) for (let b = 0; b < batchesPerEpoch; b++) step(task);
    }
    validate();
    const snapshot = tasks.map((t) => `${t}=${losses[t][losses[t].length - 1].toFixed(4)}`).join(" ");
    process.stderr.write(`epoch ${epoch + 1}/${options.epochs} val ${snapshot}\n`);
  }
  for (const optimizer of optimizers.values()) optimizer.dispose();
  return { bundle, validationLosses: losses };
}

export function trainAndExport(
  corpusPath: string,
  outPath: string,
  spec: MultiTaskModelSpec = DEFAULT_SPEC,
  options: TrainOptions = DEFAULT_TRAIN,
): TrainResult {
  const result = trainMultiTask(loadCorpus(corpusPath), spec, options);
  saveBundle(result.bundle, outPath);
  return result;
}

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    if (!argv[i].startsWith("--") || argv[i + 1] === undefined) {
      throw new Error(`bad argument ${argv[i]}`);
    }
    out.set(argv[i].slice(2), argv[i + 1]);
  }
  return out;
}

const isMain = process.argv[1]?.endsWith("train.js");
if (isMain) {
  const args = parseArgs(process.argv.slice(2));
  const corpus = args.get("in");
  const out = args.get("out");
  if (!corpus || !out) {
    process.stderr.write("usage: node dist/train.js --in corpus.json --out model.json [--epochs N] [--seed N] [--no-decoder true]\n");
    process.exit(2);
  }
  const spec = { ...DEFAULT_SPEC };
  if (args.has("seed")) spec.seed = Number(args.get("seed"));
  if (args.get("no-decoder") === "true") spec.decoder = false;
  const options = { ...DEFAULT_TRAIN };
  if (args.has("epochs")) options.epochs = Number(args.get("epochs"));
  const result = trainAndExport(corpus, out, spec, options);
  process.stderr.write(`bundle written to ${out}\n`);
  process.stdout.write(JSON.stringify({ model: out, validationLosses: result.validationLosses }) + "\n");
}
