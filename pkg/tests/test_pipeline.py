import json

import pytest

from conftest import make_gold_corpus
from polsum.corpus import (
    AnnotationSet,
    Corpus,
    DataPracticeCategory,
    Document,
    Sentence,
)
from polsum.experts import BackendUnavailable, attach_oracle
from polsum.pipeline import (
    HIGHLIGHT_MARK,
    TOPIC_TITLES,
    SummarizeOptions,
    TopicSelection,
    render,
    summarize,
)
from polsum.segmenter import (
    RawDocument,
    SegmentedDocument,
    SegmentSentence,
    segment,
)


def segmented_from(doc: Document) -> SegmentedDocument:
    """Build a segmented view straight from gold sentences, skipping the splitter."""
    sentences, offset = [], 0
    for i, s in enumerate(doc.sentences):
        sentences.append(SegmentSentence(index=i, text=s.text, start=offset,
                                         end=offset + len(s.text)))
        offset += len(s.text) + 1
    return SegmentedDocument(source_id=doc.doc_id, sentences=tuple(sentences))


def tiny_corpus() -> Corpus:
    """Hand-built three-sentence document with known gold marks."""
    mk = lambda **kw: AnnotationSet(**kw)
    sentences = (
        Sentence("d0-0", "d0", 0, "We collect your email address.",
                 mk(topics=frozenset({DataPracticeCategory.FIRST_PARTY_COLLECTION}),
                    important=True,
                    rewritten="We collect your email.")),
        Sentence("d0-1", "d0", 1, "We share location data.",
                 mk(topics=frozenset({DataPracticeCategory.THIRD_PARTY_SHARING}),
                    important=True, risk=True)),
        Sentence("d0-2", "d0", 2, "This policy is effective today.",
                 mk()),
    )
    return Corpus(documents=(Document("d0", "Tiny policy", sentences),))


def tiny_doc():
    text = " ".join(s.text for s in tiny_corpus().documents[0].sentences)
    return segment(text, source_id="d0")


class TestTopicSelection:
    def test_parse_all(self):
        sel = TopicSelection.parse("all")
        assert len(sel.topics) == 11

    def test_parse_names(self):
        sel = TopicSelection.parse("usage,data-security")
        assert sel.topics == (DataPracticeCategory.USAGE,
                              DataPracticeCategory.DATA_SECURITY)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            TopicSelection(())

    def test_rejects_duplicates(self):
        with pytest.raises(ValueError):
            TopicSelection((DataPracticeCategory.USAGE, DataPracticeCategory.USAGE))


class TestSummarize:
    def test_oracle_round_trip(self):
        corpus = tiny_corpus()
        summary = summarize(tiny_doc(), TopicSelection.all(),
                            attach_oracle(corpus))
        texts = [i.text for i in summary.items()]
        assert texts == ["We collect your email.", "We share location data."]
        assert [s.topic for s in summary.sections] == [
            DataPracticeCategory.FIRST_PARTY_COLLECTION,
            DataPracticeCategory.THIRD_PARTY_SHARING,
        ]

    def test_unimportant_dropped(self):
        summary = summarize(tiny_doc(), TopicSelection.all(),
                            attach_oracle(tiny_corpus()))
        assert all("effective today" not in i.text for i in summary.items())

    def test_topic_filter(self):
        sel = TopicSelection((DataPracticeCategory.THIRD_PARTY_SHARING,))
        summary = summarize(tiny_doc(), sel, attach_oracle(tiny_corpus()))
        assert len(summary.sections) == 1
        assert summary.items()[0].text == "We share location data."

    def test_highlight_follows_risk(self):
        summary = summarize(tiny_doc(), TopicSelection.all(),
                            attach_oracle(tiny_corpus()))
        flags = {i.text: i.highlighted for i in summary.items()}
        assert flags["We share location data."] is True
        assert flags["We collect your email."] is False

    def test_empty_sections_dropped_by_default(self):
        summary = summarize(tiny_doc(), TopicSelection.all(),
                            attach_oracle(tiny_corpus()))
        assert all(s.items for s in summary.sections)

    def test_keep_empty_sections(self):
        summary = summarize(tiny_doc(), TopicSelection.all(),
                            attach_oracle(tiny_corpus()),
                            SummarizeOptions(keep_empty_sections=True))
        assert len(summary.sections) == 11

    def test_sections_follow_selection_order(self):
        sel = TopicSelection((DataPracticeCategory.THIRD_PARTY_SHARING,
                              DataPracticeCategory.FIRST_PARTY_COLLECTION))
        summary = summarize(tiny_doc(), sel, attach_oracle(tiny_corpus()))
        assert [s.topic for s in summary.sections] == list(sel.topics)

    def test_raw_document_input(self):
        text = "<p>We collect your email address.</p> <p>We share location data.</p>"
        summary = summarize(RawDocument(source_id="d0", body=text),
                            TopicSelection.all(), attach_oracle(tiny_corpus()))
        assert len(summary.items()) == 2

    def test_source_ids(self):
        summary = summarize(tiny_doc(), TopicSelection.all(),
                            attach_oracle(tiny_corpus()))
        assert [i.source_id for i in summary.items()] == ["d0#0", "d0#1"]

    def test_provenance(self):
        summary = summarize(tiny_doc(), TopicSelection.all(),
                            attach_oracle(tiny_corpus()))
        assert summary.provenance["backend"] == "oracle-v1"
        assert summary.provenance["source_id"] == "d0"
        assert summary.provenance["thresholds"]["importance"] == 0.5

    def test_encode_called_once_per_sentence(self):
        backend = attach_oracle(tiny_corpus())
        summarize(tiny_doc(), TopicSelection.all(), backend)
        assert backend.encode_count == 3

    def test_missing_head_rejected(self):
        class ImportanceOnly(type(attach_oracle(tiny_corpus()))):
            @property
            def capabilities(self):
                return frozenset({"importance"})

        backend = ImportanceOnly(tiny_corpus())
        with pytest.raises(BackendUnavailable):
            summarize(tiny_doc(), TopicSelection.all(), backend)

    def test_workers_match_serial(self):
        corpus = make_gold_corpus(80, seed=3, n_docs=1)
        doc = corpus.documents[0]
        seg = segmented_from(doc)
        outs = []
        for workers in (1, 2, 8):
            backend = attach_oracle(corpus)
            summary = summarize(seg, TopicSelection.all(), backend,
                                SummarizeOptions(workers=workers))
            outs.append(render(summary, "json"))
        assert outs[0] == outs[1] == outs[2]


class TestRender:
    @pytest.fixture
    def summary(self):
        return summarize(tiny_doc(), TopicSelection.all(),
                         attach_oracle(tiny_corpus()))

    def test_json_round_trips(self, summary):
        payload = json.loads(render(summary, "json"))
        assert payload["provenance"]["backend"] == "oracle-v1"
        assert payload["sections"][1]["items"][0]["highlighted"] is True

    def test_markdown(self, summary):
        out = render(summary, "markdown")
        assert f"## {TOPIC_TITLES[DataPracticeCategory.FIRST_PARTY_COLLECTION]}" in out
        assert "- We collect your email." in out
        assert f"- {HIGHLIGHT_MARK} **We share location data.**" in out
        assert out.rstrip().splitlines()[-1].startswith("provenance: ")

    def test_markdown_empty(self):
        sel = TopicSelection((DataPracticeCategory.CEASE_OPERATION,))
        summary = summarize(tiny_doc(), sel, attach_oracle(tiny_corpus()))
        assert render(summary, "markdown") == ""

    def test_html_escapes(self):
        corpus = tiny_corpus()
        doc = corpus.documents[0]
        sentences = (Sentence("d0-0", "d0", 0, "We use <cookies> & pixels.",
                              AnnotationSet(
                                  topics=frozenset({DataPracticeCategory.USAGE}),
                                  important=True)),)
        corpus = Corpus(documents=(Document("d0", "T", sentences),))
        summary = summarize(segment("We use <cookies> & pixels.", "d0"),
                            TopicSelection.all(), attach_oracle(corpus))
        out = render(summary, "html")
        assert "&lt;cookies&gt; &amp; pixels" in out

    def test_unknown_format(self, summary):
        with pytest.raises(ValueError):
            render(summary, "pdf")
