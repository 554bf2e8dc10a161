import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polsum.corpus import (
    AnnotationSet,
    BadRatios,
    Corpus,
    DataPracticeCategory,
    Document,
    DuplicateId,
    EmptyCorpus,
    MalformedJson,
    SchemaViolation,
    Sentence,
    compute_stats,
    largest_remainder_sizes,
    parse_category,
    parse_corpus,
    serialize_corpus,
    split,
    task_population,
    validate,
)

MINIMAL = {
    "version": "appsi-1",
    "documents": [{
        "doc_id": "d1", "title": "Example",
        "sentences": [{"id": "s1", "index": 0, "text": "We collect data.",
                       "topics": [], "important": False, "risk": False,
                       "sensitive": False}],
    }],
}


def make_corpus(*sentence_specs):
    sentences = []
    for i, spec in enumerate(sentence_specs):
        sentences.append(Sentence(id=f"s{i}", doc_id="d0", index=spec.get("index", i),
                                  text=spec.get("text", f"Sentence {i} here."),
                                  annotations=spec.get("ann", AnnotationSet())))
    return Corpus(documents=(Document("d0", "T", tuple(sentences)),))


class TestParse:
    def test_minimal(self):
        corpus = parse_corpus(json.dumps(MINIMAL))
        assert corpus.sentence_count() == 1
        sent = next(corpus.sentences())
        assert sent.text == "We collect data."
        assert sent.annotations.topics == frozenset()

    def test_topics_and_rewrite(self):
        doc = json.loads(json.dumps(MINIMAL))
        doc["documents"][0]["sentences"][0].update(
            topics=["Data Security", "Usage"], important=True,
            rewritten="We keep data safe.")
        sent = next(parse_corpus(json.dumps(doc)).sentences())
        assert sent.annotations.topics == frozenset(
            {DataPracticeCategory.DATA_SECURITY, DataPracticeCategory.USAGE})
        assert sent.annotations.rewritten == "We keep data safe."

    def test_risk_without_important_rejected(self):
        doc = json.loads(json.dumps(MINIMAL))
        doc["documents"][0]["sentences"][0].update(risk=True, important=False)
        with pytest.raises(SchemaViolation):
            parse_corpus(json.dumps(doc))
        # lenient ingest keeps the data; validate still reports it
        corpus = parse_corpus(json.dumps(doc), lenient=True)
        report = validate(corpus)
        assert [v.code for v in report.violations] == ["risk-not-important"]

    def test_malformed_json(self):
        with pytest.raises(MalformedJson):
            parse_corpus("{nope")

    def test_duplicate_sentence_id(self):
        doc = json.loads(json.dumps(MINIMAL))
        doc["documents"][0]["sentences"].append(
            dict(doc["documents"][0]["sentences"][0], index=1))
        with pytest.raises(DuplicateId):
            parse_corpus(json.dumps(doc))

    def test_unknown_fields_preserved(self):
        doc = json.loads(json.dumps(MINIMAL))
        doc["documents"][0]["sentences"][0]["annotator"] = "expert-3"
        doc["license"] = "CC BY 4.0"
        corpus = parse_corpus(json.dumps(doc))
        assert next(corpus.sentences()).extras == {"annotator": "expert-3"}
        assert corpus.extras == {"license": "CC BY 4.0"}

    def test_round_trip(self, gold_corpus):
        again = parse_corpus(serialize_corpus(gold_corpus))
        assert again == gold_corpus

    def test_category_aliases(self):
        assert parse_category("DataSecurity") is DataPracticeCategory.DATA_SECURITY
        assert parse_category("data security") is DataPracticeCategory.DATA_SECURITY
        assert parse_category("Third") is DataPracticeCategory.THIRD_PARTY_SHARING
        assert parse_category("Edit/Control") is DataPracticeCategory.EDIT_CONTROL


class TestValidate:
    def test_valid_corpus_empty_report(self, gold_corpus):
        assert validate(gold_corpus).ok

    def test_sensitive_without_important(self):
        corpus = make_corpus({"ann": AnnotationSet(sensitive=True)})
        report = validate(corpus)
        assert len(report.violations) == 1
        assert report.violations[0].sentence_id == "s0"
        assert report.violations[0].code == "sensitive-not-important"

    def test_index_gap(self):
        corpus = make_corpus({"index": 0}, {"index": 2})
        report = validate(corpus)
        assert [v.code for v in report.violations] == ["index-gap"]


class TestSplit:
    def test_sizes_and_determinism(self, gold_corpus):
        a = split(gold_corpus, (0.8, 0.1, 0.1), seed=7)
        b = split(gold_corpus, (0.8, 0.1, 0.1), seed=7)
        assert a == b
        n = gold_corpus.sentence_count()
        imp = a.by_task["importance"]
        assert len(imp) == n
        sizes = [len(a.ids("importance", s)) for s in ("train", "validation", "test")]
        assert sizes == list(largest_remainder_sizes(n, (0.8, 0.1, 0.1)))

    def test_100_sentences_80_10_10(self):
        corpus = make_corpus(*[{} for _ in range(100)])
        assignment = split(corpus, (0.8, 0.1, 0.1), seed=7)
        assert [len(assignment.ids("importance", s))
                for s in ("train", "validation", "test")] == [80, 10, 10]

    def test_largest_remainder_tie_toward_train_then_val(self):
        # n=10 at 0.5/0.25/0.25: floors 5/2/2, one leftover unit; the two
        # fractional remainders tie at 0.5 and the earlier split (val) wins.
        assert largest_remainder_sizes(10, (0.5, 0.25, 0.25)) == (5, 3, 2)

    def test_partition_per_task(self, gold_corpus):
        assignment = split(gold_corpus, (0.7, 0.15, 0.15), seed=3)
        for task in ("importance", "topic", "risk", "sensitivity", "rewrite"):
            eligible = set(task_population(gold_corpus, task))
            assigned = assignment.by_task[task]
            assert set(assigned) == eligible
            pieces = [set(assignment.ids(task, s))
                      for s in ("train", "validation", "test")]
            assert set().union(*pieces) == eligible
            assert sum(len(p) for p in pieces) == len(eligible)

    def test_eligible_populations(self, gold_corpus):
        important = {s.id for s in gold_corpus.sentences() if s.annotations.important}
        rewritten = {s.id for s in gold_corpus.sentences()
                     if s.annotations.rewritten is not None}
        assert set(task_population(gold_corpus, "topic")) == important
        assert set(task_population(gold_corpus, "risk")) == important
        assert set(task_population(gold_corpus, "rewrite")) == rewritten

    def test_document_unit_keeps_docs_whole(self, gold_corpus):
        assignment = split(gold_corpus, (0.8, 0.1, 0.1), seed=1, unit="document")
        by_id = gold_corpus.by_id()
        doc_split = {}
        for sid, part in assignment.by_task["importance"].items():
            doc = by_id[sid].doc_id
            assert doc_split.setdefault(doc, part) == part

    def test_bad_ratios(self, gold_corpus):
        with pytest.raises(BadRatios):
            split(gold_corpus, (0.8, 0.1, 0.2), seed=0)

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            split(Corpus(documents=()), (0.8, 0.1, 0.1), seed=0)

    @given(n=st.integers(1, 300),
           ratios=st.tuples(st.floats(0, 1), st.floats(0, 1)).map(
               lambda t: (t[0] / (t[0] + t[1] + 1), t[1] / (t[0] + t[1] + 1),
                          1 / (t[0] + t[1] + 1))))
    @settings(max_examples=60)
    def test_apportionment_sums(self, n, ratios):
        sizes = largest_remainder_sizes(n, ratios)
        assert sum(sizes) == n
        assert all(s >= 0 for s in sizes)


class TestStats:
    def test_two_sentence_example(self):
        corpus = make_corpus(
            {"text": "one two three four", "ann": AnnotationSet(important=True)},
            {"text": "unmarked sentence here okay five"})
        stats = compute_stats(corpus)
        imp = stats.per_label["Important"]
        assert imp.count == 1
        assert imp.pct == pytest.approx(50.0)
        assert imp.median_len == 4.0
        assert imp.mean_len == 4.0

    def test_risk_lengths(self):
        ann = AnnotationSet(important=True, risk=True)
        corpus = make_corpus({"text": "a b c", "ann": ann},
                             {"text": "a b c d e", "ann": ann},
                             {"text": "a b c d e f g h i j", "ann": ann})
        risk = compute_stats(corpus).per_label["Risk"]
        assert risk.count == 3
        assert risk.median_len == 5.0
        assert risk.mean_len == 6.0

    def test_counts_match_brute_force(self, gold_corpus):
        stats = compute_stats(gold_corpus)
        for cat in DataPracticeCategory:
            expected = sum(1 for s in gold_corpus.sentences()
                           if cat in s.annotations.topics)
            assert stats.per_label[cat.value].count == expected
        total = gold_corpus.sentence_count()
        for label, st_ in stats.per_label.items():
            assert st_.pct * total / 100.0 == pytest.approx(st_.count, abs=1e-9)

    def test_empty(self):
        with pytest.raises(EmptyCorpus):
            compute_stats(Corpus(documents=()))

    def test_table_shape(self, gold_corpus):
        table = compute_stats(gold_corpus).to_table()
        assert table.splitlines()[0].split() == ["Topic", "Num", "Pct", "Med.", "Avg."]
        assert "Important" in table and "Sensitivity" in table
