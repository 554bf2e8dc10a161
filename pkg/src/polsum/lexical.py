"""Natively trainable baseline backend.

Shared bottom: hashed, L2-normalized word 1-2-gram counts (FNV-1a 64-bit).
Heads: one logistic/softmax linear model per classification task, trained with
round-robin task alternation over a single shared featurizer.  The rewrite
head is a deterministic rule table, not a learned decoder.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import (
    CLASSIFIABLE_TOPICS,
    Corpus,
    DataPracticeCategory,
    Sentence,
    SplitAssignment,
    parse_category,
)
from .experts import (
    CAP_REWRITE,
    BackendError,
    DimensionMismatch,
    ExpertBackend,
    FeatureVector,
    RewriteResult,
    Task,
    TaskLabel,
)
from .metrics import classification_report

MODEL_FORMAT = "polsum-lexical-1"

FNV_OFFSET = 0xCBF29CE484222325  # fixed seed of the fnv1a64 mix
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


class EmptyTaskData(BackendError):
    def __init__(self, task: str, reason: str = "no training data"):
        super().__init__(f"{task}: {reason}")
        self.task = task


class Divergence(BackendError):
    pass


def fnv1a64(data: str) -> int:
    h = FNV_OFFSET
    for byte in data.encode("utf-8"):
        h = ((h ^ byte) * FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class HashedFeaturizer:
    dim: int = 2 ** 18
    ngram_range: tuple[int, int] = (1, 2)
    lowercase: bool = True

    def __post_init__(self):
        if self.dim & (self.dim - 1) != 0 or self.dim <= 0:
            raise ValueError("dim must be a power of two")

    @property
    def tag(self) -> str:
        return f"lexical-fnv1a64-d{self.dim}"

    def featurize(self, text: str) -> FeatureVector:
        """Counts of hashed word n-grams, L2-normalized, as a sparse vector."""
        if not text.strip():
            raise ValueError("cannot featurize empty text")
        tokens = (text.lower() if self.lowercase else text).split()
        counts: dict[int, float] = {}
        lo, hi = self.ngram_range
        for n in range(lo, hi + 1):
            for i in range(len(tokens) - n + 1):
                idx = fnv1a64(" ".join(tokens[i:i + n])) & (self.dim - 1)
                counts[idx] = counts.get(idx, 0.0) + 1.0
        norm = sum(v * v for v in counts.values()) ** 0.5
        indices = tuple(sorted(counts))
        values = tuple(counts[i] / norm for i in indices)
        return FeatureVector(dim=self.dim, backend_tag=self.tag,
                             values=values, indices=indices)


# Ordered rewrite rule table: drop asides, drop boilerplate, split at the
# first semicolon, tidy whitespace.  Never returns empty text.
BOILERPLATE_PHRASES = (
    "at our sole discretion",
    "to the extent permitted by law",
    "including but not limited to",
    "from time to time",
)

_PAREN_RE = re.compile(r"\([^()]*\)")


def _tidy(text: str) -> str:
    text = re.sub(r"\s+", " ", text).strip()
    text = re.sub(r"\s+([,.;:!?])", r"\1", text)
    text = re.sub(r",\s*([,.;])", r"\1", text)
    return text.strip(" ,")


def rule_rewrite(sentence: str) -> RewriteResult:
    """Deterministic plain-language rewrite; falls back to the input."""
    if not sentence.strip():
        raise ValueError("cannot rewrite empty text")
    text = _PAREN_RE.sub(" ", sentence)
    for phrase in BOILERPLATE_PHRASES:
        text = re.sub(r",?\s*" + re.escape(phrase) + r"\s*,?", " ", text,
                      flags=re.IGNORECASE)
    text = _tidy(text)
    if ";" in text:
        head, tail = text.split(";", 1)
        head, tail = _tidy(head), _tidy(tail)
        if head and tail:
            tail = tail[0].upper() + tail[1:]
            text = f"{head.rstrip('.')}. {tail}"
            if not text.endswith((".", "!", "?")):
                text += "."
        else:
            text = head or tail
    if not text:
        return RewriteResult(sentence)
    return RewriteResult(text)


@dataclass
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 0.5
    l2: float = 1e-6
    class_weighting: str = "inverse-frequency"  # or "none"
    seed: int = 0
    alternation: str = "per-batch"  # or "per-epoch"
    batch_size: int = 32
    thresholds: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be > 0")
        if self.class_weighting not in ("none", "inverse-frequency"):
            raise ValueError(f"unknown class weighting {self.class_weighting!r}")
        if self.alternation not in ("per-batch", "per-epoch"):
            raise ValueError(f"unknown alternation granularity {self.alternation!r}")


class LinearHead:
    """One weight row per class over the hashed feature space."""

    def __init__(self, task: Task, dim: int, classes: list[str]):
        self.task = task
        self.classes = classes
        self.weights = np.zeros((len(classes), dim), dtype=np.float64)
        self.bias = np.zeros(len(classes), dtype=np.float64)

    def scores(self, fv: FeatureVector) -> np.ndarray:
        idx = np.asarray(fv.indices, dtype=np.int64)
        vals = np.asarray(fv.values, dtype=np.float64)
        return self.weights[:, idx] @ vals + self.bias


def _sigmoid(z: np.ndarray | float) -> np.ndarray | float:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -30, 30)))


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


class LexicalBackend(ExpertBackend):
    """Experts contract over the hashed featurizer and trained linear heads."""

    def __init__(self, featurizer: HashedFeaturizer, heads: dict[Task, LinearHead],
                 thresholds: dict[str, float] | None = None,
                 metadata: dict | None = None):
        super().__init__()
        self.featurizer = featurizer
        self.heads = heads
        self.thresholds = dict(thresholds or {})
        self.metadata = dict(metadata or {})
        self.backend_tag = featurizer.tag

    @property
    def capabilities(self) -> frozenset[str]:
        return frozenset({t.value for t in self.heads} | {CAP_REWRITE})

    def encode(self, sentence: str) -> FeatureVector:
        fv = self.featurizer.featurize(sentence)
        self._count_encode()
        return fv

    def classify(self, task: Task, fv: FeatureVector) -> TaskLabel:
        if task not in self.heads:
            raise BackendError(f"head not trained: {task.value}")
        if fv.dim != self.featurizer.dim or fv.backend_tag != self.backend_tag:
            raise DimensionMismatch("feature vector not produced by this backend")
        head = self.heads[task]
        raw = head.scores(fv)
        if task is Task.TOPIC:
            probs = _softmax(raw)
            scores = {parse_category(c): float(p)
                      for c, p in zip(head.classes, probs)}
            total = sum(scores.values())
            return TaskLabel(task=task, scores={c: v / total for c, v in scores.items()})
        return TaskLabel(task=task, probability=float(_sigmoid(raw[0])))

    def rewrite(self, sentence: str | None = None,
                features: FeatureVector | None = None) -> RewriteResult:
        if sentence is None:
            raise BackendError("rule rewriting needs the sentence text")
        return rule_rewrite(sentence)

    # -- persistence ----------------------------------------------------

    def save(self, path: str | Path) -> None:
        heads = {}
        for task, head in self.heads.items():
            rows = []
            for r in range(len(head.classes)):
                nz = np.flatnonzero(head.weights[r])
                rows.append({"indices": nz.tolist(),
                             "values": head.weights[r, nz].tolist()})
            heads[task.value] = {"classes": head.classes, "rows": rows,
                                 "bias": head.bias.tolist()}
        bundle = {
            "format": MODEL_FORMAT,
            "featurizer": {"dim": self.featurizer.dim,
                           "ngram_range": list(self.featurizer.ngram_range),
                           "lowercase": self.featurizer.lowercase,
                           "hash": "fnv1a64"},
            "heads": heads,
            "thresholds": self.thresholds,
            "metadata": self.metadata,
        }
        Path(path).write_text(json.dumps(bundle, ensure_ascii=False, indent=1))

    @staticmethod
    def load(path: str | Path) -> "LexicalBackend":
        bundle = json.loads(Path(path).read_text())
        if bundle.get("format") != MODEL_FORMAT:
            raise BackendError(f"unsupported model format {bundle.get('format')!r}")
        fz = bundle["featurizer"]
        featurizer = HashedFeaturizer(dim=fz["dim"],
                                      ngram_range=tuple(fz["ngram_range"]),
                                      lowercase=fz["lowercase"])
        heads: dict[Task, LinearHead] = {}
        for task_name, spec in bundle["heads"].items():
            task = Task(task_name)
            head = LinearHead(task, featurizer.dim, spec["classes"])
            for r, row in enumerate(spec["rows"]):
                head.weights[r, row["indices"]] = row["values"]
            head.bias = np.asarray(spec["bias"], dtype=np.float64)
            heads[task] = head
        return LexicalBackend(featurizer, heads, bundle.get("thresholds"),
                              bundle.get("metadata"))


def gold_topic_label(sentence: Sentence) -> DataPracticeCategory | None:
    """Single-label reduction of a multi-label topic set: first classifiable
    category in enumeration order (matches the argmax tie rule)."""
    gold = [t for t in sorted(sentence.annotations.topics, key=lambda c: c.order)
            if t in CLASSIFIABLE_TOPICS]
    return gold[0] if gold else None


@dataclass
class _TaskData:
    features: list[FeatureVector]
    labels: np.ndarray          # class indices
    class_weights: np.ndarray   # one weight per class


def _collect_task_data(task: Task, corpus: Corpus, ids: set[str],
                       cache: dict[str, FeatureVector],
                       featurizer: HashedFeaturizer,
                       weighting: str) -> _TaskData:
    features: list[FeatureVector] = []
    labels: list[int] = []
    for s in corpus.sentences():
        if s.id not in ids:
            continue
        if task is Task.TOPIC:
            gold = gold_topic_label(s)
            if gold is None:
                continue
            label = CLASSIFIABLE_TOPICS.index(gold)
        else:
            flag = {Task.IMPORTANCE: s.annotations.important,
                    Task.RISK: s.annotations.risk,
                    Task.SENSITIVITY: s.annotations.sensitive}[task]
            label = int(flag)
        if s.id not in cache:
            cache[s.id] = featurizer.featurize(s.text)
        features.append(cache[s.id])
        labels.append(label)
    if not features:
        raise EmptyTaskData(task.value)
    n_classes = len(CLASSIFIABLE_TOPICS) if task is Task.TOPIC else 2
    counts = np.bincount(labels, minlength=n_classes).astype(np.float64)
    if weighting == "inverse-frequency":
        if task is not Task.TOPIC and np.any(counts == 0):
            raise EmptyTaskData(
                task.value, "a class has zero examples under inverse-frequency weighting")
        safe = np.where(counts == 0, 1.0, counts)
        class_weights = len(labels) / (n_classes * safe)
    else:
        class_weights = np.ones(n_classes)
    return _TaskData(features, np.asarray(labels, dtype=np.int64), class_weights)


def _batch_step(head: LinearHead, data: _TaskData, batch: np.ndarray,
                lr: float, l2: float) -> None:
    for i in batch:
        fv = data.features[i]
        y = data.labels[i]
        cw = data.class_weights[y]
        idx = np.asarray(fv.indices, dtype=np.int64)
        vals = np.asarray(fv.values, dtype=np.float64)
        raw = head.weights[:, idx] @ vals + head.bias
        if head.task is Task.TOPIC:
            probs = _softmax(raw)
            grad = probs.copy()
            grad[y] -= 1.0
        else:
            p = _sigmoid(raw[0])
            grad = np.array([p - y])
        grad *= cw
        head.weights[:, idx] -= lr * (np.outer(grad, vals) + l2 * head.weights[:, idx])
        head.bias -= lr * grad


def _task_loss(head: LinearHead, data: _TaskData) -> float:
    total = 0.0
    weight_sum = 0.0
    for fv, y in zip(data.features, data.labels):
        raw = head.scores(fv)
        cw = data.class_weights[y]
        if head.task is Task.TOPIC:
            probs = _softmax(raw)
            total += -cw * np.log(max(probs[y], 1e-12))
        else:
            p = _sigmoid(raw[0])
            p = p if y == 1 else 1.0 - p
            total += -cw * np.log(max(p, 1e-12))
        weight_sum += cw
    return float(total / weight_sum)


def _head_predictions(backend: LexicalBackend, task: Task,
                      features: dict[str, FeatureVector],
                      threshold: float) -> dict[str, str]:
    preds = {}
    for sid, fv in features.items():
        label = backend.classify(task, fv)
        if task is Task.TOPIC:
            preds[sid] = label.top_topic().value
        else:
            preds[sid] = "positive" if label.decide(threshold) else "negative"
    return preds


@dataclass
class TrainResult:
    backend: LexicalBackend
    epoch_losses: dict[str, list[float]]  # per task, one value per epoch
    validation: dict[str, dict[str, float]]  # task -> {micro_f1, macro_f1}


CLASSIFICATION_TASKS = (Task.IMPORTANCE, Task.TOPIC, Task.RISK, Task.SENSITIVITY)


def train_multitask(corpus: Corpus, splits: SplitAssignment,
                    config: TrainConfig | None = None,
                    featurizer: HashedFeaturizer | None = None) -> TrainResult:
    """Train the four heads with round-robin task alternation.

    All tasks draw features from one shared featurizer cache; task order is
    fixed (importance, topic, risk, sensitivity) and every task receives the
    same number of batches per epoch (shorter tasks cycle their data).
    """
    config = config or TrainConfig()
    featurizer = featurizer or HashedFeaturizer()
    rng = np.random.RandomState(config.seed)
    cache: dict[str, FeatureVector] = {}
    data: dict[Task, _TaskData] = {}
    for task in CLASSIFICATION_TASKS:
        train_ids = set(splits.ids(task.value, "train"))
        data[task] = _collect_task_data(task, corpus, train_ids, cache,
                                        featurizer, config.class_weighting)
    heads = {
        task: LinearHead(task, featurizer.dim,
                         [c.value for c in CLASSIFIABLE_TOPICS]
                         if task is Task.TOPIC else ["negative", "positive"])
        for task in CLASSIFICATION_TASKS
    }
    batches_per_epoch = max(
        -(-len(d.features) // config.batch_size) for d in data.values())
    epoch_losses: dict[str, list[float]] = {t.value: [] for t in CLASSIFICATION_TASKS}
    cursors = {task: np.array([], dtype=np.int64) for task in CLASSIFICATION_TASKS}

    def next_batch(task: Task) -> np.ndarray:
        # Cycle through a reshuffled permutation whenever the task runs dry.
        while len(cursors[task]) < config.batch_size:
            perm = rng.permutation(len(data[task].features))
            cursors[task] = np.concatenate([cursors[task], perm])
        batch, cursors[task] = (cursors[task][:config.batch_size],
                                cursors[task][config.batch_size:])
        return batch

    for _ in range(config.epochs):
        if config.alternation == "per-batch":
            for _ in range(batches_per_epoch):
                for task in CLASSIFICATION_TASKS:
                    _batch_step(heads[task], data[task], next_batch(task),
                                config.learning_rate, config.l2)
        else:
            for task in CLASSIFICATION_TASKS:
                for _ in range(batches_per_epoch):
                    _batch_step(heads[task], data[task], next_batch(task),
                                config.learning_rate, config.l2)
        for task in CLASSIFICATION_TASKS:
            loss = _task_loss(heads[task], data[task])
            if not np.isfinite(loss):
                raise Divergence(f"non-finite loss on task {task.value}")
            epoch_losses[task.value].append(loss)

    thresholds = {t.value: config.thresholds.get(t.value, 0.5)
                  for t in (Task.IMPORTANCE, Task.RISK, Task.SENSITIVITY)}
    backend = LexicalBackend(featurizer, heads, thresholds, metadata={
        "seed": config.seed, "epochs": config.epochs,
        "learning_rate": config.learning_rate, "l2": config.l2,
        "class_weighting": config.class_weighting,
        "alternation": config.alternation, "batch_size": config.batch_size,
    })

    by_id = corpus.by_id()
    validation: dict[str, dict[str, float]] = {}
    for task in CLASSIFICATION_TASKS:
        val_ids = splits.ids(task.value, "validation")
        gold: dict[str, str] = {}
        feats: dict[str, FeatureVector] = {}
        for sid in val_ids:
            s = by_id[sid]
            if task is Task.TOPIC:
                g = gold_topic_label(s)
                if g is None:
                    continue
                gold[sid] = g.value
            else:
                flag = {Task.IMPORTANCE: s.annotations.important,
                        Task.RISK: s.annotations.risk,
                        Task.SENSITIVITY: s.annotations.sensitive}[task]
                gold[sid] = "positive" if flag else "negative"
            feats[sid] = cache.get(sid) or featurizer.featurize(s.text)
        if not gold:
            validation[task.value] = {"micro_f1": float("nan"),
                                      "macro_f1": float("nan")}
            continue
        labels = ([c.value for c in CLASSIFIABLE_TOPICS] if task is Task.TOPIC
                  else ["negative", "positive"])
        preds = _head_predictions(backend, task, feats,
                                  thresholds.get(task.value, 0.5))
        report = classification_report(gold, preds, labels)
        validation[task.value] = {"micro_f1": report.micro_f1,
                                  "macro_f1": report.macro_f1}
    return TrainResult(backend=backend, epoch_losses=epoch_losses,
                       validation=validation)
