"""Corpus data model: parsing, validation, splitting and descriptive statistics.

The corpus is a JSON file of annotated privacy-policy documents.  Each sentence
carries a topic label set (data-practice categories), three boolean marks
(important / risk / sensitive) and an optional plain-language rewrite.
"""
from __future__ import annotations

import json
import re
import random
import statistics
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Mapping

SCHEMA_VERSION = "appsi-1"

SPLIT_NAMES = ("train", "validation", "test")

# Task names used for per-task split populations and evaluation.
TASKS = ("importance", "topic", "risk", "sensitivity", "rewrite")


class DataPracticeCategory(Enum):
    """The 11 data-practice topics a policy sentence can be labeled with."""

    FIRST_PARTY_COLLECTION = "First Party Collection"
    PERMISSION_ACQUISITION = "Permission Acquisition"
    THIRD_PARTY_SHARING = "Third Party Sharing"
    USAGE = "Usage"
    DATA_RETENTION = "Data Retention"
    DATA_SECURITY = "Data Security"
    EDIT_CONTROL = "Edit/Control"
    SPECIFIC_AUDIENCES = "Specific Audiences"
    CONTACT_INFORMATION = "Contact Information"
    POLICY_CHANGE = "Policy Change"
    CEASE_OPERATION = "Cease Operation"

    @property
    def order(self) -> int:
        return _CATEGORY_ORDER[self]


_CATEGORY_ORDER = {c: i for i, c in enumerate(DataPracticeCategory)}

# Topics the topic classifier is trained/evaluated on.  Two categories are too
# sparse to classify and are excluded from the closed prediction set.
CLASSIFIABLE_TOPICS = tuple(
    c
    for c in DataPracticeCategory
    if c
    not in (
        DataPracticeCategory.CEASE_OPERATION,
        DataPracticeCategory.PERMISSION_ACQUISITION,
    )
)

# Short row names used by the stats table, also accepted as aliases.
CATEGORY_SHORT_NAMES = {
    DataPracticeCategory.FIRST_PARTY_COLLECTION: "First",
    DataPracticeCategory.PERMISSION_ACQUISITION: "Permission",
    DataPracticeCategory.THIRD_PARTY_SHARING: "Third",
    DataPracticeCategory.USAGE: "Usage",
    DataPracticeCategory.DATA_RETENTION: "Retention",
    DataPracticeCategory.DATA_SECURITY: "Security",
    DataPracticeCategory.EDIT_CONTROL: "Control",
    DataPracticeCategory.SPECIFIC_AUDIENCES: "Specific",
    DataPracticeCategory.CONTACT_INFORMATION: "Contact",
    DataPracticeCategory.POLICY_CHANGE: "Change",
    DataPracticeCategory.CEASE_OPERATION: "Cease",
}


def _category_aliases() -> dict[str, DataPracticeCategory]:
    aliases: dict[str, DataPracticeCategory] = {}
    for cat in DataPracticeCategory:
        compact = cat.value.replace(" ", "").replace("/", "")
        for name in (cat.value, compact, cat.name, CATEGORY_SHORT_NAMES[cat]):
            aliases[name.lower()] = cat
        aliases[cat.value.replace("/", " ").lower()] = cat
        aliases[cat.name.replace("_", "-").lower()] = cat
        aliases[cat.value.replace("/", " ").replace(" ", "-").lower()] = cat
    return aliases


_CATEGORY_ALIASES = _category_aliases()


def parse_category(name: str) -> DataPracticeCategory:
    """Resolve a category from its display form, compact form or table alias."""
    try:
        return _CATEGORY_ALIASES[name.strip().lower()]
    except KeyError:
        raise UnknownCategory(name) from None


class CorpusError(Exception):
    pass


class MalformedJson(CorpusError):
    pass


class SchemaViolation(CorpusError):
    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class DuplicateId(CorpusError):
    pass


class UnknownCategory(CorpusError):
    pass


class BadRatios(CorpusError):
    pass


class EmptyCorpus(CorpusError):
    pass


@dataclass(frozen=True)
class AnnotationSet:
    topics: frozenset[DataPracticeCategory] = frozenset()
    important: bool = False
    risk: bool = False
    sensitive: bool = False
    rewritten: str | None = None


@dataclass(frozen=True)
class Sentence:
    id: str
    doc_id: str
    index: int
    text: str
    annotations: AnnotationSet = AnnotationSet()
    extras: Mapping[str, object] = field(default_factory=dict)

    def word_count(self) -> int:
        return len(self.text.split())


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    sentences: tuple[Sentence, ...]
    extras: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...]
    version: str = SCHEMA_VERSION
    extras: Mapping[str, object] = field(default_factory=dict)

    def sentences(self) -> Iterator[Sentence]:
        for doc in self.documents:
            yield from doc.sentences

    def sentence_count(self) -> int:
        return sum(len(d.sentences) for d in self.documents)

    def by_id(self) -> dict[str, Sentence]:
        return {s.id: s for s in self.sentences()}


_TAG_RE = re.compile(r"</?[a-zA-Z!][^<>]*>")


def _expect(cond: bool, path: str, reason: str) -> None:
    if not cond:
        raise SchemaViolation(path, reason)


def _parse_sentence(obj: object, doc_id: str, path: str, lenient: bool) -> Sentence:
    _expect(isinstance(obj, dict), path, "sentence must be an object")
    assert isinstance(obj, dict)
    known = {"id", "index", "text", "topics", "important", "risk", "sensitive", "rewritten"}
    for key, typ in (("id", str), ("text", str), ("index", int)):
        _expect(key in obj, path, f"missing field '{key}'")
        _expect(isinstance(obj[key], typ) and not isinstance(obj[key], bool),
                f"{path}.{key}", f"expected {typ.__name__}")
    _expect(obj["text"].strip() != "", f"{path}.text", "text must be non-empty")
    topics_raw = obj.get("topics", [])
    _expect(isinstance(topics_raw, list), f"{path}.topics", "expected list of strings")
    topics = set()
    for t in topics_raw:
        _expect(isinstance(t, str), f"{path}.topics", "expected list of strings")
        try:
            topics.add(parse_category(t))
        except UnknownCategory:
            raise SchemaViolation(f"{path}.topics", f"unknown category {t!r}") from None
    flags = {}
    for key in ("important", "risk", "sensitive"):
        val = obj.get(key, False)
        _expect(isinstance(val, bool), f"{path}.{key}", "expected boolean")
        flags[key] = val
    rewritten = obj.get("rewritten")
    if rewritten is not None:
        _expect(isinstance(rewritten, str) and rewritten != "",
                f"{path}.rewritten", "expected non-empty string")
    if not lenient:
        _expect(not (flags["risk"] and not flags["important"]),
                path, "risk requires important")
        _expect(not (flags["sensitive"] and not flags["important"]),
                path, "sensitive requires important")
        _expect(not (rewritten is not None and not flags["important"]),
                path, "rewritten requires important")
    ann = AnnotationSet(topics=frozenset(topics), important=flags["important"],
                        risk=flags["risk"], sensitive=flags["sensitive"],
                        rewritten=rewritten)
    extras = {k: v for k, v in obj.items() if k not in known}
    return Sentence(id=obj["id"], doc_id=doc_id, index=obj["index"],
                    text=obj["text"], annotations=ann, extras=extras)


def parse_corpus(raw: str, lenient: bool = False) -> Corpus:
    """Parse corpus JSON text.

    With ``lenient=True`` the mark-dependency rules (risk/sensitive/rewritten
    require important) are not enforced at ingest; :func:`validate` will still
    report them.
    """
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedJson(str(exc)) from exc
    _expect(isinstance(data, dict), "$", "top level must be an object")
    docs_raw = data.get("documents")
    _expect(isinstance(docs_raw, list), "$.documents", "expected list")
    version = data.get("version", SCHEMA_VERSION)
    _expect(isinstance(version, str), "$.version", "expected string")
    documents = []
    seen_docs: set[str] = set()
    seen_sentence_ids: set[str] = set()
    for d_i, doc_obj in enumerate(docs_raw):
        dpath = f"$.documents[{d_i}]"
        _expect(isinstance(doc_obj, dict), dpath, "document must be an object")
        doc_id = doc_obj.get("doc_id")
        _expect(isinstance(doc_id, str) and doc_id != "", f"{dpath}.doc_id",
                "expected non-empty string")
        if doc_id in seen_docs:
            raise DuplicateId(f"duplicate doc_id {doc_id!r}")
        seen_docs.add(doc_id)
        title = doc_obj.get("title", "")
        _expect(isinstance(title, str), f"{dpath}.title", "expected string")
        sents_raw = doc_obj.get("sentences", [])
        _expect(isinstance(sents_raw, list), f"{dpath}.sentences", "expected list")
        sentences = []
        for s_i, s_obj in enumerate(sents_raw):
            sent = _parse_sentence(s_obj, doc_id, f"{dpath}.sentences[{s_i}]", lenient)
            if sent.id in seen_sentence_ids:
                raise DuplicateId(f"duplicate sentence id {sent.id!r}")
            seen_sentence_ids.add(sent.id)
            _expect(sent.index == s_i, f"{dpath}.sentences[{s_i}].index",
                    f"expected index {s_i}, got {sent.index}")
            sentences.append(sent)
        doc_extras = {k: v for k, v in doc_obj.items()
                      if k not in ("doc_id", "title", "sentences")}
        documents.append(Document(doc_id=doc_id, title=title,
                                  sentences=tuple(sentences), extras=doc_extras))
    extras = {k: v for k, v in data.items() if k not in ("version", "documents")}
    return Corpus(documents=tuple(documents), version=version, extras=extras)


def serialize_corpus(corpus: Corpus) -> str:
    """Serialize back to the corpus JSON format (inverse of parse_corpus)."""
    docs = []
    for doc in corpus.documents:
        sents = []
        for s in doc.sentences:
            obj: dict[str, object] = {
                "id": s.id,
                "index": s.index,
                "text": s.text,
                "topics": [t.value for t in sorted(s.annotations.topics,
                                                   key=lambda c: c.order)],
                "important": s.annotations.important,
                "risk": s.annotations.risk,
                "sensitive": s.annotations.sensitive,
            }
            if s.annotations.rewritten is not None:
                obj["rewritten"] = s.annotations.rewritten
            obj.update(s.extras)
            sents.append(obj)
        dobj: dict[str, object] = {"doc_id": doc.doc_id, "title": doc.title,
                                   "sentences": sents}
        dobj.update(doc.extras)
        docs.append(dobj)
    top: dict[str, object] = {"version": corpus.version, "documents": docs}
    top.update(corpus.extras)
    return json.dumps(top, ensure_ascii=False, indent=2)


@dataclass(frozen=True)
class Violation:
    sentence_id: str | None
    code: str
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation]

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> str:
        return json.dumps({"ok": self.ok,
                           "violations": [vars(v) for v in self.violations]},
                          ensure_ascii=False, indent=2)


def validate(corpus: Corpus) -> ValidationReport:
    """Check every corpus invariant; violations are data, not exceptions."""
    violations: list[Violation] = []
    seen_ids: set[str] = set()
    seen_docs: set[str] = set()
    for doc in corpus.documents:
        if doc.doc_id in seen_docs:
            violations.append(Violation(None, "duplicate-doc-id",
                                        f"doc_id {doc.doc_id!r} repeated"))
        seen_docs.add(doc.doc_id)
        expected = 0
        for s in doc.sentences:
            if s.id in seen_ids:
                violations.append(Violation(s.id, "duplicate-id",
                                            f"sentence id {s.id!r} repeated"))
            seen_ids.add(s.id)
            if s.index != expected:
                violations.append(Violation(
                    s.id, "index-gap",
                    f"doc {doc.doc_id!r}: expected index {expected}, got {s.index}"))
                expected = s.index
            expected += 1
            if not s.text.strip():
                violations.append(Violation(s.id, "empty-text", "empty sentence text"))
            if _TAG_RE.search(s.text):
                violations.append(Violation(s.id, "markup", "text contains markup tags"))
            ann = s.annotations
            if ann.risk and not ann.important:
                violations.append(Violation(s.id, "risk-not-important",
                                            "risk mark requires important"))
            if ann.sensitive and not ann.important:
                violations.append(Violation(s.id, "sensitive-not-important",
                                            "sensitive mark requires important"))
            if ann.rewritten is not None and not ann.important:
                violations.append(Violation(s.id, "rewrite-not-important",
                                            "rewritten form requires important"))
    return ValidationReport(violations)


def largest_remainder_sizes(total: int, ratios: tuple[float, float, float]) -> tuple[int, int, int]:
    """Apportion ``total`` units across three splits.

    Floor each quota, then hand out the remainder by largest fractional part,
    breaking ties toward the earlier split (train > validation > test).
    """
    quotas = [total * r for r in ratios]
    sizes = [int(q) for q in quotas]
    remainder = total - sum(sizes)
    order = sorted(range(3), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[:remainder]:
        sizes[i] += 1
    return sizes[0], sizes[1], sizes[2]


def task_population(corpus: Corpus, task: str) -> list[str]:
    """Sentence ids eligible for a task's split.

    Importance covers every sentence; topic/risk/sensitivity cover important
    sentences; rewrite covers sentences that have a rewritten form.
    """
    if task == "importance":
        return [s.id for s in corpus.sentences()]
    if task in ("topic", "risk", "sensitivity"):
        return [s.id for s in corpus.sentences() if s.annotations.important]
    if task == "rewrite":
        return [s.id for s in corpus.sentences()
                if s.annotations.rewritten is not None]
    raise ValueError(f"unknown task {task!r}")


@dataclass
class SplitAssignment:
    by_task: dict[str, dict[str, str]]
    seed: int
    ratios: tuple[float, float, float]
    unit: str = "sentence"

    def ids(self, task: str, split: str) -> list[str]:
        return [sid for sid, sp in self.by_task[task].items() if sp == split]

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "ratios": list(self.ratios),
                           "unit": self.unit, "by_task": self.by_task},
                          ensure_ascii=False, indent=2)

    @staticmethod
    def from_json(raw: str) -> "SplitAssignment":
        data = json.loads(raw)
        return SplitAssignment(by_task=data["by_task"], seed=data["seed"],
                               ratios=tuple(data["ratios"]), unit=data.get("unit", "sentence"))


def _assign(ids: list[str], ratios: tuple[float, float, float],
            rng: random.Random) -> dict[str, str]:
    ids = sorted(ids)
    rng.shuffle(ids)
    n_train, n_val, n_test = largest_remainder_sizes(len(ids), ratios)
    assignment = {}
    for i, sid in enumerate(ids):
        if i < n_train:
            assignment[sid] = "train"
        elif i < n_train + n_val:
            assignment[sid] = "validation"
        else:
            assignment[sid] = "test"
    return assignment


def split(corpus: Corpus, ratios: tuple[float, float, float], seed: int,
          unit: str = "sentence") -> SplitAssignment:
    """Deterministic train/validation/test assignment, one mapping per task.

    ``unit="document"`` assigns whole documents to a split (leakage-safe) and
    derives each task's sentence mapping from the document assignment.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise BadRatios(f"ratios must be three non-negative fractions summing to 1: {ratios}")
    if corpus.sentence_count() == 0:
        raise EmptyCorpus("cannot split an empty corpus")
    if unit not in ("sentence", "document"):
        raise ValueError(f"unknown split unit {unit!r}")
    by_task: dict[str, dict[str, str]] = {}
    if unit == "document":
        doc_assignment = _assign([d.doc_id for d in corpus.documents], ratios,
                                 random.Random(seed))
        for task in TASKS:
            pop = set(task_population(corpus, task))
            by_task[task] = {s.id: doc_assignment[s.doc_id]
                            for s in corpus.sentences() if s.id in pop}
    else:
        for task in TASKS:
            rng = random.Random(f"{seed}:{task}")
            by_task[task] = _assign(task_population(corpus, task), ratios, rng)
    return SplitAssignment(by_task=by_task, seed=seed, ratios=tuple(ratios), unit=unit)


@dataclass
class LabelStats:
    count: int
    pct: float
    median_len: float
    mean_len: float


@dataclass
class CorpusStats:
    per_label: dict[str, LabelStats]
    total_sentences: int
    total_annotations: int
    rewritten_count: int
    mean_rewritten_len: float
    mean_original_len: float
    metadata: dict[str, str]

    @property
    def compression(self) -> float:
        if self.mean_original_len == 0:
            return 0.0
        return 1.0 - self.mean_rewritten_len / self.mean_original_len

    def to_json(self) -> str:
        return json.dumps({
            "per_label": {k: vars(v) for k, v in self.per_label.items()},
            "total_sentences": self.total_sentences,
            "total_annotations": self.total_annotations,
            "rewritten_count": self.rewritten_count,
            "mean_rewritten_len": self.mean_rewritten_len,
            "mean_original_len": self.mean_original_len,
            "compression": self.compression,
            "metadata": self.metadata,
        }, ensure_ascii=False, indent=2)

    def to_table(self) -> str:
        rows = [("Topic", "Num", "Pct", "Med.", "Avg.")]
        for cat in DataPracticeCategory:
            st = self.per_label[cat.value]
            rows.append((CATEGORY_SHORT_NAMES[cat], str(st.count),
                         f"{st.pct:.2f}%", f"{st.median_len:.1f}", f"{st.mean_len:.1f}"))
        for label in ("Important", "Risk", "Sensitivity"):
            st = self.per_label[label]
            rows.append((label, str(st.count), f"{st.pct:.2f}%",
                         f"{st.median_len:.1f}", f"{st.mean_len:.1f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(5)]
        lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
                 for row in rows]
        lines.append("")
        lines.append(f"Sentences: {self.total_sentences}  "
                     f"Annotations: {self.total_annotations}  "
                     f"Rewritten: {self.rewritten_count}")
        lines.append(f"Mean rewritten length: {self.mean_rewritten_len:.1f} words "
                     f"vs {self.mean_original_len:.1f} original "
                     f"({self.compression * 100:.0f}% reduction)")
        return "\n".join(lines)


def _label_stats(lengths: list[int], total: int) -> LabelStats:
    count = len(lengths)
    pct = 100.0 * count / total
    if not lengths:
        return LabelStats(0, pct, 0.0, 0.0)
    return LabelStats(count, pct, float(statistics.median(lengths)),
                      sum(lengths) / count)


def compute_stats(corpus: Corpus) -> CorpusStats:
    """Per-label counts/percentages and word-length stats (whitespace tokens)."""
    total = corpus.sentence_count()
    if total == 0:
        raise EmptyCorpus("cannot compute stats of an empty corpus")
    per_label: dict[str, LabelStats] = {}
    for cat in DataPracticeCategory:
        lengths = [s.word_count() for s in corpus.sentences()
                   if cat in s.annotations.topics]
        per_label[cat.value] = _label_stats(lengths, total)
    for label, pred in (("Important", lambda a: a.important),
                        ("Risk", lambda a: a.risk),
                        ("Sensitivity", lambda a: a.sensitive)):
        lengths = [s.word_count() for s in corpus.sentences() if pred(s.annotations)]
        per_label[label] = _label_stats(lengths, total)
    total_annotations = sum(
        len(s.annotations.topics) + s.annotations.important
        + s.annotations.risk + s.annotations.sensitive
        for s in corpus.sentences())
    rewritten = [(len(s.annotations.rewritten.split()), s.word_count())
                 for s in corpus.sentences() if s.annotations.rewritten is not None]
    mean_rw = sum(r for r, _ in rewritten) / len(rewritten) if rewritten else 0.0
    mean_orig = sum(o for _, o in rewritten) / len(rewritten) if rewritten else 0.0
    return CorpusStats(
        per_label=per_label,
        total_sentences=total,
        total_annotations=total_annotations,
        rewritten_count=len(rewritten),
        mean_rewritten_len=mean_rw,
        mean_original_len=mean_orig,
        metadata={
            "pct_base": "all sentences",
            "length_unit": "whitespace-delimited words",
            "annotation_count_rule": "topic labels + important/risk/sensitive marks",
        },
    )
