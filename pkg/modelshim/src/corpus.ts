import { readFileSync } from "node:fs";
import { z } from "zod";

export const CLASSIFIABLE_TOPICS = [
  "First Party Collection",
  "Third Party Sharing",
  "Usage",
  "Data Retention",
  "Data Security",
  "Edit/Control",
  "Specific Audiences",
  "Contact Information",
  "Policy Change",
] as const;

export const BINARY_TASKS = ["importance", "risk", "sensitivity"] as const;
export const CLASSIFICATION_TASKS = ["importance", "topic", "risk", "sensitivity"] as const;
export const ALL_TASKS = [...CLASSIFICATION_TASKS, "rewrite"] as const;
export type TaskName = (typeof ALL_TASKS)[number];

const sentenceSchema = z.object({
  id: z.string().min(1),
  index: z.number().int().nonnegative(),
  text: z.string().min(1),
  topics: z.array(z.string()).default([]),
  important: z.boolean().default(false),
  risk: z.boolean().default(false),
  sensitive: z.boolean().default(false),
  rewritten: z.string().nullish(),
});

const corpusSchema = z.object({
  version: z.string().optional(),
  documents: z.array(
    z.object({
      doc_id: z.string().min(1),
      title: z.string().optional(),
      sentences: z.array(sentenceSchema),
    }),
  ),
});

export type CorpusSentence = z.infer<typeof sentenceSchema>;

export function loadCorpus(path: string): CorpusSentence[] {
  const parsed = corpusSchema.parse(JSON.parse(readFileSync(path, "utf-8")));
  return parsed.documents.flatMap((d) => d.sentences);
}

/** Which sentences a task trains on (mirrors the engine's eligibility rules). */
export function taskPopulation(sentences: CorpusSentence[], task: TaskName): CorpusSentence[] {
  switch (task) {
    case "importance":
      return sentences;
    case "rewrite":
      return sentences.filter((s) => s.rewritten != null && s.rewritten !== "");
    case "topic":
      return sentences.filter(
        (s) => s.important && s.topics.some((t) => (CLASSIFIABLE_TOPICS as readonly string[]).includes(t)),
      );
    default:
      return sentences.filter((s) => s.important);
  }
}

/** First classifiable topic in canonical order, or -1. */
export function topicIndex(s: CorpusSentence): number {
  for (let i = 0; i < CLASSIFIABLE_TOPICS.length; i++) {
    if (s.topics.includes(CLASSIFIABLE_TOPICS[i])) return i;
  }
  return -1;
}

export function binaryLabel(s: CorpusSentence, task: TaskName): number {
  if (task === "importance") return s.important ? 1 : 0;
  if (task === "risk") return s.risk ? 1 : 0;
  return s.sensitive ? 1 : 0;
}
