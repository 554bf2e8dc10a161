import { createInterface } from "node:readline";
import { CLASSIFIABLE_TOPICS, CLASSIFICATION_TASKS } from "./corpus.js";
import { ModelBundle, classifyScores, encodeFeatures, greedyRewrite, loadBundle } from "./model.js";

export interface ServeConfig {
  modelPath: string;
  timeoutMs: number;
}

interface Request {
  id?: unknown;
  op?: unknown;
  task?: unknown;
  text?: unknown;
  features?: unknown;
}

type Response = Record<string, unknown>;

function fail(id: unknown, error: string): Response {
  return { id: id ?? null, ok: false, error };
}

function asFeatures(raw: unknown, dim: number): number[] {
  if (!Array.isArray(raw) || raw.some((v) => typeof v !== "number" || !Number.isFinite(v))) {
    throw new Error("features must be an array of finite numbers");
  }
  if (raw.length !== dim) {
    throw new Error(`DimensionMismatch: expected ${dim} features, got ${raw.length}`);
  }
  return raw as number[];
}

export function handleRequest(bundle: ModelBundle, req: Request): Response {
  const { id } = req;
  if (typeof id !== "number") return fail(id, "request id must be a number");
  try {
    switch (req.op) {
      case "capabilities": {
        const caps: string[] = [...CLASSIFICATION_TASKS];
        if (bundle.decoder) caps.push("rewrite");
        return { id, ok: true, capabilities: caps };
      }
      case "encode": {
        if (typeof req.text !== "string" || !req.text.trim()) return fail(id, "encode needs text");
        return { id, ok: true, features: encodeFeatures(bundle, req.text) };
      }
      case "classify": {
        const task = req.task;
        if (typeof task !== "string" || !(CLASSIFICATION_TASKS as readonly string[]).includes(task)) {
          return fail(id, `unknown task ${String(task)}`);
        }
        let features: number[];
        if (req.features !== undefined) {
          features = asFeatures(req.features, bundle.spec.sharedDim);
        } else if (typeof req.text === "string" && req.text.trim()) {
          features = encodeFeatures(bundle, req.text);
        } else {
          return fail(id, "classify needs features or text");
        }
        const probs = classifyScores(bundle, task, features);
        if (task === "topic") {
          const scores = Object.fromEntries(CLASSIFIABLE_TOPICS.map((name, i) => [name, probs[i]]));
          return { id, ok: true, scores };
        }
        return { id, ok: true, scores: { negative: probs[0], positive: probs[1] } };
      }
      case "rewrite": {
        if (!bundle.decoder) return fail(id, "rewrite head not available");
        if (typeof req.text !== "string" || !req.text.trim()) return fail(id, "rewrite needs text");
        return { id, ok: true, text: greedyRewrite(bundle, req.text) };
      }
      default:
        return fail(id, `unknown op ${String(req.op)}`);
    }
  } catch (err) {
    return fail(id, err instanceof Error ? err.message : String(err));
  }
}

export function serve(config: ServeConfig): void {
  const bundle = loadBundle(config.modelPath);
  const rl = createInterface({ input: process.stdin, terminal: false });
  rl.on("line", (line) => {
    if (!line.trim()) return;
    let req: Request;
    try {
      req = JSON.parse(line);
    } catch {
      process.stdout.write(JSON.stringify(fail(null, "request is not valid JSON")) + "\n");
      return;
    }
    process.stdout.write(JSON.stringify(handleRequest(bundle, req)) + "\n");
  });
  rl.on("close", () => process.exit(0));
}

const isMain = process.argv[1]?.endsWith("serve.js");
if (isMain) {
  const modelPath = process.argv[2];
  if (!modelPath) {
    process.stderr.write("usage: node dist/serve.js model.json\n");
    process.exit(2);
  }
  serve({ modelPath, timeoutMs: 10_000 });
}
