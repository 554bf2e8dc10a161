import random

import pytest

from polsum.corpus import (
    AnnotationSet,
    CLASSIFIABLE_TOPICS,
    Corpus,
    DataPracticeCategory,
    Document,
    Sentence,
)

WORDS = (
    "we collect share retain process your personal data location email "
    "account information third parties partners providers consent delete "
    "request security encryption biometric payment advertising children "
    "policy notice update contact support service legal required purpose"
).split()


def make_gold_corpus(n_sentences: int, seed: int = 0, n_docs: int = 5,
                     p_important: float = 0.5, p_risk: float = 0.1,
                     p_sensitive: float = 0.08, p_rewrite: float = 0.6) -> Corpus:
    """Random but reproducible corpus with all invariants satisfied and
    pairwise-distinct sentence texts (so oracle matching is unambiguous)."""
    rng = random.Random(seed)
    docs = []
    per_doc = n_sentences // n_docs
    counter = 0
    for d in range(n_docs):
        count = per_doc if d < n_docs - 1 else n_sentences - per_doc * (n_docs - 1)
        sentences = []
        for i in range(count):
            words = rng.choices(WORDS, k=rng.randint(4, 18))
            text = " ".join(words).capitalize() + f" clause {counter}."
            important = rng.random() < p_important
            risk = important and rng.random() < p_risk
            sensitive = important and rng.random() < p_sensitive
            topics = frozenset(rng.sample(CLASSIFIABLE_TOPICS, rng.randint(1, 2))) \
                if important else frozenset(
                    rng.sample(list(DataPracticeCategory), rng.randint(0, 1)))
            rewritten = None
            if important and rng.random() < p_rewrite:
                rewritten = "In short " + " ".join(words[: max(3, len(words) // 2)]) + "."
            sentences.append(Sentence(
                id=f"s{counter}", doc_id=f"d{d}", index=i, text=text,
                annotations=AnnotationSet(topics=topics, important=important,
                                          risk=risk, sensitive=sensitive,
                                          rewritten=rewritten)))
            counter += 1
        docs.append(Document(doc_id=f"d{d}", title=f"Policy {d}",
                             sentences=tuple(sentences)))
    return Corpus(documents=tuple(docs))


@pytest.fixture
def gold_corpus():
    return make_gold_corpus(120, seed=7)
