import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polsum.corpus import (
    AnnotationSet,
    Corpus,
    DataPracticeCategory,
    Document,
    Sentence,
    split,
)
from polsum.experts import Task
from polsum.lexical import (
    EmptyTaskData,
    HashedFeaturizer,
    LexicalBackend,
    TrainConfig,
    fnv1a64,
    rule_rewrite,
    train_multitask,
)

FILLER = ("service provides features and options for every account holder "
          "during normal operation of the application").split()


def make_toy_corpus(n: int = 240, seed: int = 5) -> Corpus:
    """Linearly separable 4-task corpus: one cue token decides each task."""
    rng = random.Random(seed)
    sentences = []
    for i in range(n):
        words = rng.choices(FILLER, k=6)
        important = i % 2 == 0
        risk = sensitive = False
        topic = None
        if important:
            words.append("keyclause")
            topic = (DataPracticeCategory.USAGE if i % 4 == 0
                     else DataPracticeCategory.DATA_SECURITY)
            words.append("usagecue" if topic is DataPracticeCategory.USAGE
                         else "securitycue")
            if i % 6 == 0:
                risk = True
                words.append("breach")
            if i % 8 == 0:
                sensitive = True
                words.append("biometric")
        rng.shuffle(words)
        text = " ".join(words) + f" n{i}"
        ann = AnnotationSet(
            topics=frozenset({topic}) if topic else frozenset(),
            important=important, risk=risk, sensitive=sensitive)
        sentences.append(Sentence(id=f"t{i}", doc_id="toy", index=i, text=text,
                                  annotations=ann))
    return Corpus(documents=(Document("toy", "Toy", tuple(sentences)),))


class TestFeaturizer:
    def test_deterministic(self):
        fz = HashedFeaturizer()
        assert fz.featurize("We Collect Data") == fz.featurize("we collect data")

    def test_expected_indices(self):
        fz = HashedFeaturizer(dim=2 ** 18)
        fv = fz.featurize("a b c")
        expected = sorted({fnv1a64(g) & (fz.dim - 1)
                           for g in ("a", "b", "c", "a b", "b c")})
        assert list(fv.indices) == expected

    def test_repeated_token(self):
        fv = HashedFeaturizer().featurize("Data data")
        # two distinct n-grams: "data" (count 2) and "data data" (count 1)
        assert len(fv.indices) == 2
        assert max(fv.values) == pytest.approx(2 / np.sqrt(5))

    def test_l2_norm(self):
        fv = HashedFeaturizer().featurize("we collect your data daily")
        assert sum(v * v for v in fv.values) == pytest.approx(1.0)

    def test_dim_must_be_power_of_two(self):
        with pytest.raises(ValueError):
            HashedFeaturizer(dim=1000)

    @given(st.text(min_size=1, max_size=60))
    @settings(max_examples=300)
    def test_index_bounds(self, text):
        if not text.strip():
            return
        fz = HashedFeaturizer(dim=2 ** 12)
        fv = fz.featurize(text)
        assert all(0 <= i < fz.dim for i in fv.indices)


class TestRuleRewrite:
    def test_no_rule_fires(self):
        assert rule_rewrite("We collect your email.").text == "We collect your email."

    def test_parenthetical(self):
        assert rule_rewrite("We may (at any time) share data.").text == \
            "We may share data."

    def test_boilerplate_then_semicolon(self):
        out = rule_rewrite(
            "We retain data to the extent permitted by law; you may request deletion.")
        assert out.text == "We retain data. You may request deletion."

    def test_combined(self):
        out = rule_rewrite("We may, at our sole discretion (including via partners), "
                           "share data; we will notify you.")
        assert out.text == "We may share data. We will notify you."

    def test_never_longer(self):
        inputs = [
            "We collect your email.",
            "We may (at any time) share (all) data.",
            "Data; more data; even more data.",
            "(everything parenthesized)",
            "from time to time",
        ]
        for text in inputs:
            assert len(rule_rewrite(text).text.split()) <= len(text.split())

    def test_never_empty(self):
        assert rule_rewrite("(everything parenthesized)").text


@pytest.fixture(scope="module")
def trained():
    corpus = make_toy_corpus()
    splits = split(corpus, (0.8, 0.1, 0.1), seed=0)
    config = TrainConfig(epochs=30, seed=0)
    return corpus, splits, train_multitask(corpus, splits, config)


class TestTraining:

    def test_toy_convergence(self, trained):
        corpus, splits, result = trained
        backend = result.backend
        correct = {t: 0 for t in Task}
        totals = {t: 0 for t in Task}
        by_id = corpus.by_id()
        for task in Task:
            for sid in splits.ids(task.value if task is not Task.TOPIC else "topic",
                                  "train"):
                s = by_id[sid]
                fv = backend.encode(s.text)
                label = backend.classify(task, fv)
                if task is Task.TOPIC:
                    gold = next(iter(s.annotations.topics), None)
                    if gold is None:
                        continue
                    ok = label.top_topic() is gold
                else:
                    gold_flag = {Task.IMPORTANCE: s.annotations.important,
                                 Task.RISK: s.annotations.risk,
                                 Task.SENSITIVITY: s.annotations.sensitive}[task]
                    ok = label.decide(0.5) == gold_flag
                correct[task] += ok
                totals[task] += 1
            assert totals[task] > 0
            assert correct[task] / totals[task] >= 0.99

    def test_loss_non_increasing_on_separable_set(self, trained):
        _, _, result = trained
        for task, losses in result.epoch_losses.items():
            for earlier, later in zip(losses, losses[1:]):
                assert later <= earlier + 1e-6, f"{task} loss increased"

    def test_validation_reported(self, trained):
        _, _, result = trained
        assert set(result.validation) == {"importance", "topic", "risk", "sensitivity"}
        assert result.validation["importance"]["micro_f1"] >= 0.9

    def test_determinism_byte_identical_models(self, tmp_path):
        corpus = make_toy_corpus(n=80)
        splits = split(corpus, (0.8, 0.1, 0.1), seed=1)
        config = TrainConfig(epochs=5, seed=42)
        for name in ("a.json", "b.json"):
            train_multitask(corpus, splits, config).backend.save(tmp_path / name)
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_save_load_round_trip(self, trained, tmp_path):
        _, _, result = trained
        result.backend.save(tmp_path / "model.json")
        loaded = LexicalBackend.load(tmp_path / "model.json")
        text = "keyclause usagecue service account n0"
        fv1 = result.backend.encode(text)
        fv2 = loaded.encode(text)
        assert fv1.indices == fv2.indices
        a = result.backend.classify(Task.IMPORTANCE, fv1).probability
        b = loaded.classify(Task.IMPORTANCE, fv2).probability
        assert a == pytest.approx(b, abs=1e-12)

    def test_empty_risk_positives_with_weighting(self):
        corpus = make_toy_corpus(n=40)
        # strip every risk mark
        docs = []
        for doc in corpus.documents:
            sents = tuple(
                Sentence(s.id, s.doc_id, s.index, s.text,
                         AnnotationSet(topics=s.annotations.topics,
                                       important=s.annotations.important,
                                       risk=False,
                                       sensitive=s.annotations.sensitive,
                                       rewritten=s.annotations.rewritten))
                for s in doc.sentences)
            docs.append(Document(doc.doc_id, doc.title, sents))
        corpus = Corpus(documents=tuple(docs))
        splits = split(corpus, (0.8, 0.1, 0.1), seed=0)
        with pytest.raises(EmptyTaskData) as err:
            train_multitask(corpus, splits,
                            TrainConfig(epochs=1,
                                        class_weighting="inverse-frequency"))
        assert err.value.task == "risk"

    def test_shared_featurizer_cache(self, trained):
        # all heads consume features from the same backend tag / dim
        _, _, result = trained
        backend = result.backend
        fv = backend.encode("keyclause service n2")
        for task in Task:
            backend.classify(task, fv)  # no DimensionMismatch

    def test_per_epoch_alternation(self):
        corpus = make_toy_corpus(n=60)
        splits = split(corpus, (0.8, 0.1, 0.1), seed=0)
        result = train_multitask(corpus, splits,
                                 TrainConfig(epochs=3, alternation="per-epoch"))
        assert len(result.epoch_losses["importance"]) == 3
