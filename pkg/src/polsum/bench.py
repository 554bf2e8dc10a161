"""Efficiency harness: shared-encoder pipeline vs per-task re-encoding, and
length-sliced evaluation of a backend against gold annotations.

Counts are deterministic; wall times depend on the host and are reported but
never asserted.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

from .corpus import CLASSIFIABLE_TOPICS, DataPracticeCategory, Sentence
from .experts import (
    CAP_REWRITE,
    ExpertBackend,
    FeatureVector,
    RewriteResult,
    Task,
    TaskLabel,
)
from .lexical import gold_topic_label, rule_rewrite
from .metrics import ClassificationReport, RougeScore, classification_report, rouge_l
from .pipeline import SummarizeOptions, TopicSelection
from .segmenter import RawDocument, SegmentedDocument, segment, strip_markup


class EmptyTestSet(Exception):
    pass


@dataclass
class VariantCost:
    encode_calls: int = 0
    rewrite_attributed: int = 0
    encode_time: float = 0.0
    task_time: float = 0.0

    @property
    def total_time(self) -> float:
        return self.encode_time + self.task_time


@dataclass
class EfficiencyReport:
    sentences: int
    important: int
    filtered: int
    v1: VariantCost
    v2: VariantCost
    mode: str = "lazy"

    @property
    def encode_call_reduction(self) -> float:
        if self.v1.encode_calls == 0:
            return 0.0
        return 1.0 - self.v2.encode_calls / self.v1.encode_calls

    @property
    def encode_time_reduction(self) -> float:
        if self.v1.encode_time == 0:
            return 0.0
        return 1.0 - self.v2.encode_time / self.v1.encode_time

    def to_json(self) -> str:
        return json.dumps({
            "sentences": self.sentences,
            "important": self.important,
            "filtered": self.filtered,
            "mode": self.mode,
            "v1": vars(self.v1) | {"total_time": self.v1.total_time},
            "v2": vars(self.v2) | {"total_time": self.v2.total_time},
            "encode_call_reduction": self.encode_call_reduction,
            "encode_time_reduction": self.encode_time_reduction,
        }, indent=2)

    def to_table(self) -> str:
        n = self.sentences
        rows = [
            ("Metric", "Per-task encoding", "Shared encoding"),
            ("Encode Calls", str(self.v1.encode_calls), str(self.v2.encode_calls)),
            ("Encoding Time (s)", f"{self.v1.encode_time:.2f}", f"{self.v2.encode_time:.2f}"),
            ("Task Inference Time (s)", f"{self.v1.task_time:.2f}", f"{self.v2.task_time:.2f}"),
            ("Total Time (s)", f"{self.v1.total_time:.2f}", f"{self.v2.total_time:.2f}"),
            ("Avg. Time per Sentence (s)", f"{self.v1.total_time / n:.4f}",
             f"{self.v2.total_time / n:.4f}"),
        ]
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        lines = ["  ".join(c.ljust(widths[i]) for i, c in enumerate(row)).rstrip()
                 for row in rows]
        lines.append(f"Encode-call reduction: {self.encode_call_reduction * 100:.1f}%  "
                     f"encode-time reduction: {self.encode_time_reduction * 100:.1f}%")
        return "\n".join(lines)


def _collect_sentences(docs) -> list[str]:
    texts: list[str] = []
    for doc in docs:
        if isinstance(doc, RawDocument):
            doc = segment(strip_markup(doc), source_id=doc.source_id)
        if isinstance(doc, SegmentedDocument):
            texts.extend(s.text for s in doc.sentences)
        else:
            texts.extend(doc)
    return texts


def run_efficiency(docs, backend_factory, selection: TopicSelection,
                   opts: SummarizeOptions | None = None,
                   exhaustive: bool = False) -> EfficiencyReport:
    """Drive two fresh backends through the same workload and compare costs.

    The shared variant encodes each sentence once and reuses the features for
    every head.  The per-task variant re-encodes for every head it consults:
    importance over all sentences, topic over the important set, and
    risk/sensitivity/rewrite over the filtered set (or every head over every
    sentence with ``exhaustive=True``).
    """
    opts = opts or SummarizeOptions()
    texts = _collect_sentences(docs)
    if not texts:
        raise EmptyTestSet("no sentences to benchmark")

    # Shared-encoding variant: one encode per sentence, features reused.
    backend_v2 = backend_factory()
    v2 = VariantCost()
    important = 0
    filtered = 0
    base_count = backend_v2.encode_count
    for text in texts:
        t0 = time.perf_counter()
        fv = backend_v2.encode(text)
        v2.encode_time += time.perf_counter() - t0
        t0 = time.perf_counter()
        imp = backend_v2.classify(Task.IMPORTANCE, fv)
        if imp.decide(opts.threshold(Task.IMPORTANCE)):
            important += 1
            topic = backend_v2.classify(Task.TOPIC, fv).top_topic()
            if topic in selection:
                filtered += 1
                backend_v2.classify(Task.RISK, fv)
                backend_v2.classify(Task.SENSITIVITY, fv)
                if CAP_REWRITE in backend_v2.capabilities:
                    backend_v2.rewrite(sentence=text, features=fv)
        v2.task_time += time.perf_counter() - t0
    total_v2 = backend_v2.encode_count - base_count
    v2.encode_calls = len(texts)
    v2.rewrite_attributed = total_v2 - len(texts)

    # Per-task variant: a fresh identical backend, re-encoding per consult.
    backend_v1 = backend_factory()
    v1 = VariantCost()
    base_count = backend_v1.encode_count

    def consult(text: str, task: Task | None, rewrite: bool = False):
        t0 = time.perf_counter()
        fv = backend_v1.encode(text)
        v1.encode_time += time.perf_counter() - t0
        t0 = time.perf_counter()
        result = None
        if rewrite:
            backend_v1.rewrite(sentence=text, features=fv)
        elif task is not None:
            result = backend_v1.classify(task, fv)
        v1.task_time += time.perf_counter() - t0
        return result

    has_rewrite = CAP_REWRITE in backend_v1.capabilities
    if exhaustive:
        for text in texts:
            for task in Task:
                consult(text, task)
            if has_rewrite:
                consult(text, None, rewrite=True)
    else:
        for text in texts:
            imp = consult(text, Task.IMPORTANCE)
            if not imp.decide(opts.threshold(Task.IMPORTANCE)):
                continue
            topic = consult(text, Task.TOPIC).top_topic()
            if topic not in selection:
                continue
            consult(text, Task.RISK)
            consult(text, Task.SENSITIVITY)
            if has_rewrite:
                consult(text, None, rewrite=True)
    v1.encode_calls = backend_v1.encode_count - base_count
    return EfficiencyReport(sentences=len(texts), important=important,
                            filtered=filtered, v1=v1, v2=v2,
                            mode="exhaustive" if exhaustive else "lazy")


class SyntheticBackend(ExpertBackend):
    """Deterministic instrumented backend for benchmarking.

    Decisions are fixed by constructor flags; ``encode_delay`` (seconds) is
    busy-waited to simulate an expensive encoder.  The rewrite head works from
    features, so no encode is attributed to rewriting.
    """

    backend_tag = "synthetic-v1"

    def __init__(self, encode_delay: float = 0.0, important: bool = True,
                 topic: DataPracticeCategory = CLASSIFIABLE_TOPICS[0],
                 risk: bool = False, sensitive: bool = False,
                 with_rewrite: bool = True, dim: int = 4):
        super().__init__()
        self.encode_delay = encode_delay
        self.important = important
        self.topic = topic
        self.risk = risk
        self.sensitive = sensitive
        self.with_rewrite = with_rewrite
        self.dim = dim

    @property
    def capabilities(self) -> frozenset[str]:
        caps = {t.value for t in Task}
        if self.with_rewrite:
            caps.add(CAP_REWRITE)
        return frozenset(caps)

    def encode(self, sentence: str) -> FeatureVector:
        if self.encode_delay > 0:
            time.sleep(self.encode_delay)
        self._count_encode()
        values = tuple(float(len(sentence) % (i + 7)) for i in range(self.dim))
        return FeatureVector(dim=self.dim, backend_tag=self.backend_tag,
                             values=values)

    def classify(self, task: Task, fv: FeatureVector) -> TaskLabel:
        if task is Task.TOPIC:
            scores = dict.fromkeys(CLASSIFIABLE_TOPICS, 0.0)
            scores[self.topic] = 1.0
            return TaskLabel(task=task, scores=scores)
        flag = {Task.IMPORTANCE: self.important, Task.RISK: self.risk,
                Task.SENSITIVITY: self.sensitive}[task]
        return TaskLabel(task=task, probability=1.0 if flag else 0.0)

    def rewrite(self, sentence: str | None = None,
                features: FeatureVector | None = None) -> RewriteResult:
        if sentence is not None:
            return rule_rewrite(sentence)
        return RewriteResult("rewritten")


@dataclass
class SliceMetrics:
    size: int
    classification: dict[str, dict[str, float]]  # task -> micro/macro f1
    rouge: RougeScore | None

    def as_dict(self) -> dict:
        return {
            "size": self.size,
            "classification": self.classification,
            "rouge_l": vars(self.rouge) if self.rouge else None,
        }


@dataclass
class LengthSliceReport:
    k: int
    slices: dict[str, SliceMetrics] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"k": self.k,
                           "slices": {n: s.as_dict() for n, s in self.slices.items()}},
                          indent=2)


def _evaluate_slice(sentences: list[Sentence], backend: ExpertBackend,
                    opts: SummarizeOptions) -> SliceMetrics:
    features = {s.id: backend.encode(s.text) for s in sentences}
    classification: dict[str, dict[str, float]] = {}
    for task in (Task.IMPORTANCE, Task.TOPIC, Task.RISK, Task.SENSITIVITY):
        eligible = (sentences if task is Task.IMPORTANCE
                    else [s for s in sentences if s.annotations.important])
        gold: dict[str, str] = {}
        pred: dict[str, str] = {}
        for s in eligible:
            label = backend.classify(task, features[s.id])
            if task is Task.TOPIC:
                g = gold_topic_label(s)
                if g is None:
                    continue
                gold[s.id] = g.value
                pred[s.id] = label.top_topic().value
            else:
                flag = {Task.IMPORTANCE: s.annotations.important,
                        Task.RISK: s.annotations.risk,
                        Task.SENSITIVITY: s.annotations.sensitive}[task]
                gold[s.id] = "positive" if flag else "negative"
                pred[s.id] = ("positive" if label.decide(opts.threshold(task))
                              else "negative")
        if not gold:
            continue
        labels = ([c.value for c in CLASSIFIABLE_TOPICS] if task is Task.TOPIC
                  else ["negative", "positive"])
        report: ClassificationReport = classification_report(gold, pred, labels)
        classification[task.value] = {"micro_f1": report.micro_f1,
                                      "macro_f1": report.macro_f1}
    rouge = None
    pairs = [(s, s.annotations.rewritten) for s in sentences
             if s.annotations.rewritten is not None]
    if pairs and CAP_REWRITE in backend.capabilities:
        scores = [rouge_l(backend.rewrite(sentence=s.text,
                                          features=features[s.id]).text, ref)
                  for s, ref in pairs]
        n = len(scores)
        rouge = RougeScore(sum(s.precision for s in scores) / n,
                           sum(s.recall for s in scores) / n,
                           sum(s.f1 for s in scores) / n)
    return SliceMetrics(size=len(sentences), classification=classification,
                        rouge=rouge)


def slice_by_length(test_set: list[Sentence], k: int, backend: ExpertBackend,
                    opts: SummarizeOptions | None = None) -> LengthSliceReport:
    """Evaluate on the k longest, k shortest and all test sentences.

    Length is in whitespace words; ties break by sentence id.
    """
    if not test_set:
        raise EmptyTestSet("empty test set")
    if k > len(test_set):
        raise ValueError(f"k={k} exceeds test set size {len(test_set)}")
    opts = opts or SummarizeOptions()
    by_len = sorted(test_set, key=lambda s: (s.word_count(), s.id))
    report = LengthSliceReport(k=k)
    report.slices["longest"] = _evaluate_slice(by_len[-k:], backend, opts)
    report.slices["shortest"] = _evaluate_slice(by_len[:k], backend, opts)
    report.slices["all"] = _evaluate_slice(list(test_set), backend, opts)
    return report
