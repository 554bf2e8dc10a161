"""Expert-backend contract: a shared per-sentence feature encoding consumed by
the Importance/Topic/Risk/Sensitivity heads and an optional rewrite head.

Backends count encode invocations so the shared-encoding benchmark can verify
that a pipeline run encodes each sentence exactly once.
"""
from __future__ import annotations

import abc
import math
import re
import threading
from dataclasses import dataclass, field
from enum import Enum

from .corpus import CLASSIFIABLE_TOPICS, Corpus, DataPracticeCategory


class Task(Enum):
    IMPORTANCE = "importance"
    TOPIC = "topic"
    RISK = "risk"
    SENSITIVITY = "sensitivity"


BINARY_TASKS = (Task.IMPORTANCE, Task.RISK, Task.SENSITIVITY)

CAP_REWRITE = "rewrite"


class BackendError(Exception):
    pass


class BackendUnavailable(BackendError):
    pass


class EncodingFailure(BackendError):
    pass


class DimensionMismatch(BackendError):
    pass


class UnsupportedTask(BackendError):
    pass


class UnknownSentence(BackendError):
    pass


class GenerationFailure(BackendError):
    pass


@dataclass(frozen=True)
class FeatureVector:
    """Shared per-sentence representation, dense or sparse."""

    dim: int
    backend_tag: str
    values: tuple[float, ...]
    indices: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if self.indices is None:
            if len(self.values) != self.dim:
                raise ValueError("dense length must equal dim")
        else:
            if len(self.indices) != len(self.values):
                raise ValueError("sparse indices/values length mismatch")
            if any(i < 0 or i >= self.dim for i in self.indices):
                raise ValueError("sparse index out of range")
            if any(self.indices[i] >= self.indices[i + 1]
                   for i in range(len(self.indices) - 1)):
                raise ValueError("sparse indices must be strictly increasing")
        if any(not math.isfinite(v) for v in self.values):
            raise ValueError("feature values must be finite")

    @property
    def is_sparse(self) -> bool:
        return self.indices is not None


@dataclass(frozen=True)
class TaskLabel:
    """Head output: a topic score distribution or a positive-class probability."""

    task: Task
    probability: float | None = None
    scores: dict[DataPracticeCategory, float] | None = None

    def __post_init__(self):
        if self.task is Task.TOPIC:
            if self.scores is None:
                raise ValueError("topic label needs scores")
            total = sum(self.scores.values())
            if any(v < 0 for v in self.scores.values()) or abs(total - 1.0) > 1e-6:
                raise ValueError("topic scores must be a distribution")
        else:
            if self.probability is None or not 0.0 <= self.probability <= 1.0:
                raise ValueError("binary probability must be in [0, 1]")

    def decide(self, threshold: float = 0.5) -> bool:
        if self.task is Task.TOPIC:
            raise ValueError("topic labels decide via top_topic()")
        return self.probability >= threshold

    def top_topic(self) -> DataPracticeCategory:
        """Argmax topic; ties break by category enumeration order."""
        assert self.scores is not None
        return max(self.scores, key=lambda c: (self.scores[c], -c.order))


@dataclass(frozen=True)
class RewriteResult:
    text: str
    truncated: bool = False


class ExpertBackend(abc.ABC):
    """Contract shared by the oracle, the lexical baseline and external servers.

    ``encode`` increments ``encode_count`` by exactly one per call; classify
    and rewrite given a FeatureVector never touch the counter.  Backends whose
    rewrite path must re-encode text (external processes) attribute that one
    encode to the counter, keeping the efficiency accounting honest.
    """

    backend_tag: str = "backend"
    thread_safe: bool = True

    def __init__(self):
        self._encode_count = 0
        self._count_lock = threading.Lock()

    @property
    def encode_count(self) -> int:
        return self._encode_count

    def _count_encode(self, n: int = 1) -> None:
        with self._count_lock:
            self._encode_count += n

    @property
    @abc.abstractmethod
    def capabilities(self) -> frozenset[str]:
        """Available heads: task values plus 'rewrite' when supported."""

    @abc.abstractmethod
    def encode(self, sentence: str) -> FeatureVector: ...

    @abc.abstractmethod
    def classify(self, task: Task, fv: FeatureVector) -> TaskLabel: ...

    @abc.abstractmethod
    def rewrite(self, sentence: str | None = None,
                features: FeatureVector | None = None) -> RewriteResult: ...

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


_WS_RE = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    return _WS_RE.sub(" ", text).strip()


@dataclass
class _GoldEntry:
    important: bool
    risk: bool
    sensitive: bool
    topics: tuple[DataPracticeCategory, ...]
    rewritten: str | None
    text: str


class OracleBackend(ExpertBackend):
    """Answers every head from gold annotations; test and ceiling backend.

    Sentences are matched by whitespace-normalized text.  encode produces a
    1-dim vector holding the sentence's gold-table index (still counted, so
    the shared-encoding accounting is exercised).
    """

    backend_tag = "oracle-v1"

    def __init__(self, corpus: Corpus):
        super().__init__()
        self._entries: list[_GoldEntry] = []
        self._by_text: dict[str, int] = {}
        for s in corpus.sentences():
            key = normalize_text(s.text)
            if key in self._by_text:
                continue  # first occurrence wins for duplicate texts
            ann = s.annotations
            self._by_text[key] = len(self._entries)
            self._entries.append(_GoldEntry(
                important=ann.important, risk=ann.risk, sensitive=ann.sensitive,
                topics=tuple(sorted(ann.topics, key=lambda c: c.order)),
                rewritten=ann.rewritten, text=s.text))

    @property
    def capabilities(self) -> frozenset[str]:
        return frozenset({t.value for t in Task} | {CAP_REWRITE})

    def _lookup(self, sentence: str) -> int:
        key = normalize_text(sentence)
        if key not in self._by_text:
            raise UnknownSentence(f"sentence not in corpus: {sentence[:60]!r}")
        return self._by_text[key]

    def encode(self, sentence: str) -> FeatureVector:
        if not sentence.strip():
            raise EncodingFailure("cannot encode an empty sentence")
        idx = self._lookup(sentence)
        self._count_encode()
        return FeatureVector(dim=1, backend_tag=self.backend_tag,
                             values=(float(idx),))

    def _entry(self, fv: FeatureVector) -> _GoldEntry:
        if fv.dim != 1 or fv.backend_tag != self.backend_tag:
            raise DimensionMismatch("feature vector not produced by this oracle")
        return self._entries[int(fv.values[0])]

    def classify(self, task: Task, fv: FeatureVector) -> TaskLabel:
        entry = self._entry(fv)
        if task is Task.TOPIC:
            gold = [t for t in entry.topics if t in CLASSIFIABLE_TOPICS]
            scores = dict.fromkeys(CLASSIFIABLE_TOPICS, 0.0)
            pool = gold if gold else list(CLASSIFIABLE_TOPICS)
            for t in pool:
                scores[t] = 1.0 / len(pool)
            return TaskLabel(task=task, scores=scores)
        flag = {Task.IMPORTANCE: entry.important, Task.RISK: entry.risk,
                Task.SENSITIVITY: entry.sensitive}[task]
        return TaskLabel(task=task, probability=1.0 if flag else 0.0)

    def rewrite(self, sentence: str | None = None,
                features: FeatureVector | None = None) -> RewriteResult:
        if features is not None:
            entry = self._entry(features)
        elif sentence is not None:
            entry = self._entries[self._lookup(sentence)]
        else:
            raise GenerationFailure("rewrite needs a sentence or features")
        if entry.rewritten is not None:
            return RewriteResult(entry.rewritten)
        return RewriteResult(entry.text)


def attach_oracle(corpus: Corpus) -> OracleBackend:
    return OracleBackend(corpus)
