"""Topic-controlled summarization and interpretation engine for privacy
policies: corpus tooling, sentence segmentation, shared-feature expert
backends, evaluation metrics and an encoding-efficiency benchmark."""

from .corpus import (
    AnnotationSet,
    CLASSIFIABLE_TOPICS,
    Corpus,
    CorpusStats,
    DataPracticeCategory,
    Document,
    Sentence,
    SplitAssignment,
    compute_stats,
    parse_corpus,
    serialize_corpus,
    split,
    validate,
)
from .experts import ExpertBackend, FeatureVector, RewriteResult, Task, TaskLabel, attach_oracle
from .external import open_external_backend, run_conformance
from .lexical import HashedFeaturizer, LexicalBackend, TrainConfig, rule_rewrite, train_multitask
from .metrics import classification_report, cohens_kappa, rouge_l, rouge_n
from .pipeline import Summary, SummarizeOptions, TopicSelection, render, summarize
from .segmenter import RawDocument, SegmentedDocument, segment, strip_markup, truncate

__version__ = "0.1.0"
