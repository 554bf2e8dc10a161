"""End-to-end summarization: segment, encode once, gate by importance, filter
by the user's topic selection, mark risk/sensitivity, rewrite, and assemble a
topic-grouped summary with highlighted items.

Risk/sensitivity/rewrite heads run only for sentences that survive both gates,
which is what makes the shared-encoder variant cheap.
"""
from __future__ import annotations

import html as html_module
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .corpus import DataPracticeCategory, parse_category
from .experts import CAP_REWRITE, BackendUnavailable, ExpertBackend, Task
from .segmenter import SEGMENTER_VERSION, RawDocument, SegmentedDocument, segment, strip_markup

# Fixed display title per topic section (localizable table).
TOPIC_TITLES: dict[DataPracticeCategory, str] = {
    DataPracticeCategory.FIRST_PARTY_COLLECTION: "How your data is collected",
    DataPracticeCategory.PERMISSION_ACQUISITION: "App permissions requested",
    DataPracticeCategory.THIRD_PARTY_SHARING: "How your data is shared with third parties",
    DataPracticeCategory.USAGE: "How your data is used",
    DataPracticeCategory.DATA_RETENTION: "How long your data is kept",
    DataPracticeCategory.DATA_SECURITY: "How your data is protected",
    DataPracticeCategory.EDIT_CONTROL: "How you can manage your data",
    DataPracticeCategory.SPECIFIC_AUDIENCES: "Rules for specific groups of users",
    DataPracticeCategory.CONTACT_INFORMATION: "How to contact the provider",
    DataPracticeCategory.POLICY_CHANGE: "How policy changes are announced",
    DataPracticeCategory.CEASE_OPERATION: "What happens if the service shuts down",
}

HIGHLIGHT_MARK = "⚠"  # warning sign prefix in markdown output


@dataclass(frozen=True)
class TopicSelection:
    """Ordered topic subset controlling which sections appear, or ALL."""

    topics: tuple[DataPracticeCategory, ...]

    def __post_init__(self):
        if not self.topics:
            raise ValueError("topic selection cannot be empty")
        if len(set(self.topics)) != len(self.topics):
            raise ValueError("duplicate topics in selection")

    def __contains__(self, topic: DataPracticeCategory) -> bool:
        return topic in self.topics

    @staticmethod
    def all() -> "TopicSelection":
        return TopicSelection(tuple(DataPracticeCategory))

    @staticmethod
    def parse(names: list[str] | str) -> "TopicSelection":
        if isinstance(names, str):
            names = [n for n in names.split(",") if n.strip()]
        if len(names) == 1 and names[0].strip().lower() == "all":
            return TopicSelection.all()
        return TopicSelection(tuple(parse_category(n) for n in names))


@dataclass
class SummarizeOptions:
    workers: int = 1
    keep_empty_sections: bool = False
    min_confidence: float = 0.0
    thresholds: dict[str, float] = field(default_factory=dict)

    def threshold(self, task: Task) -> float:
        return self.thresholds.get(task.value, 0.5)


@dataclass(frozen=True)
class SummaryItem:
    text: str
    highlighted: bool
    source_id: str
    scores: dict[str, float]
    original: str


@dataclass(frozen=True)
class Section:
    topic: DataPracticeCategory
    title: str
    items: tuple[SummaryItem, ...]


@dataclass(frozen=True)
class Summary:
    sections: tuple[Section, ...]
    provenance: dict[str, object]

    def items(self) -> list[SummaryItem]:
        return [item for section in self.sections for item in section.items]


@dataclass(frozen=True)
class FilteredEntry:
    """One sentence that passed the importance and topic gates."""

    index: int
    source_id: str
    original: str
    topic: DataPracticeCategory
    risk: bool
    sensitive: bool
    rewrite: str
    scores: dict[str, float]


def _process_sentence(index: int, source_id: str, text: str,
                      backend: ExpertBackend, selection: TopicSelection,
                      opts: SummarizeOptions) -> FilteredEntry | None:
    fv = backend.encode(text)
    importance = backend.classify(Task.IMPORTANCE, fv)
    if not importance.decide(opts.threshold(Task.IMPORTANCE)):
        return None
    topic_label = backend.classify(Task.TOPIC, fv)
    topic = topic_label.top_topic()
    if topic not in selection:
        return None
    if opts.min_confidence > 0 and topic_label.scores[topic] < opts.min_confidence:
        return None
    risk = backend.classify(Task.RISK, fv)
    sensitive = backend.classify(Task.SENSITIVITY, fv)
    if CAP_REWRITE in backend.capabilities:
        rewrite = backend.rewrite(sentence=text, features=fv).text
    else:
        rewrite = text
    return FilteredEntry(
        index=index, source_id=source_id, original=text, topic=topic,
        risk=risk.decide(opts.threshold(Task.RISK)),
        sensitive=sensitive.decide(opts.threshold(Task.SENSITIVITY)),
        rewrite=rewrite,
        scores={
            "importance": importance.probability,
            "topic": topic_label.scores[topic],
            "risk": risk.probability,
            "sensitivity": sensitive.probability,
        })


def summarize(doc: RawDocument | SegmentedDocument, selection: TopicSelection,
              backend: ExpertBackend,
              opts: SummarizeOptions | None = None) -> Summary:
    """Run the full pipeline over one document."""
    opts = opts or SummarizeOptions()
    missing = {t.value for t in Task} - backend.capabilities
    if missing:
        raise BackendUnavailable(f"backend lacks heads: {sorted(missing)}")
    if isinstance(doc, RawDocument):
        doc = segment(strip_markup(doc), source_id=doc.source_id)
    sentences = [(s.index, f"{doc.source_id}#{s.index}", s.text)
                 for s in doc.sentences]

    def work(args):
        return _process_sentence(args[0], args[1], args[2], backend, selection, opts)

    if opts.workers > 1 and backend.thread_safe:
        with ThreadPoolExecutor(max_workers=opts.workers) as pool:
            results = list(pool.map(work, sentences))
    else:
        results = [work(s) for s in sentences]
    entries = [e for e in results if e is not None]

    sections = []
    for topic in selection.topics:
        items = tuple(
            SummaryItem(text=e.rewrite, highlighted=e.risk or e.sensitive,
                        source_id=e.source_id, scores=e.scores, original=e.original)
            for e in entries if e.topic == topic)
        if items or opts.keep_empty_sections:
            sections.append(Section(topic=topic, title=TOPIC_TITLES[topic],
                                    items=items))
    provenance = {
        "backend": backend.backend_tag,
        "segmenter": SEGMENTER_VERSION,
        "thresholds": {t.value: opts.threshold(t)
                       for t in (Task.IMPORTANCE, Task.RISK, Task.SENSITIVITY)},
        "topics": [t.value for t in selection.topics],
        "source_id": doc.source_id,
    }
    return Summary(sections=tuple(sections), provenance=provenance)


def render(summary: Summary, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps({
            "sections": [{
                "topic": s.topic.value,
                "title": s.title,
                "items": [{"text": i.text, "highlighted": i.highlighted,
                           "source": i.source_id, "scores": i.scores}
                          for i in s.items],
            } for s in summary.sections],
            "provenance": summary.provenance,
        }, ensure_ascii=False, indent=2, sort_keys=True)
    if fmt == "markdown":
        if not summary.sections:
            return ""
        lines: list[str] = []
        for section in summary.sections:
            lines.append(f"## {section.title}")
            lines.append("")
            for item in section.items:
                if item.highlighted:
                    lines.append(f"- {HIGHLIGHT_MARK} **{item.text}**")
                else:
                    lines.append(f"- {item.text}")
            lines.append("")
        lines.append("---")
        lines.append(f"provenance: {json.dumps(summary.provenance, sort_keys=True)}")
        return "\n".join(lines) + "\n"
    if fmt == "html":
        if not summary.sections:
            return ""
        parts = ["<article class=\"summary\">"]
        for section in summary.sections:
            parts.append(f"  <h2>{html_module.escape(section.title)}</h2>")
            parts.append("  <ul>")
            for item in section.items:
                cls = " class=\"highlight\"" if item.highlighted else ""
                parts.append(f"    <li{cls}>{html_module.escape(item.text)}</li>")
            parts.append("  </ul>")
        prov = html_module.escape(json.dumps(summary.provenance, sort_keys=True))
        parts.append(f"  <footer class=\"provenance\">{prov}</footer>")
        parts.append("</article>")
        return "\n".join(parts) + "\n"
    raise ValueError(f"unknown format {fmt!r}")
