"""Command-line entry point: validate, stats, split, train, summarize,
evaluate, bench and backend-check.

Machine-readable output goes to stdout, logs to stderr.  Exit codes: 0 on
success, 1 on validation/processing failures, 2 on usage errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import bench as bench_mod
from . import corpus as corpus_mod
from . import external as external_mod
from . import lexical as lexical_mod
from . import metrics as metrics_mod
from . import pipeline as pipeline_mod
from .corpus import CLASSIFIABLE_TOPICS
from .experts import ExpertBackend, Task, attach_oracle
from .segmenter import RawDocument

log = logging.getLogger("polsum")


class UsageError(Exception):
    pass


def _load_corpus(path: str, lenient: bool = False) -> corpus_mod.Corpus:
    return corpus_mod.parse_corpus(Path(path).read_text(encoding="utf-8"),
                                   lenient=lenient)


def open_backend(spec: str | None) -> ExpertBackend:
    """Backend spec: oracle:<corpus.json> | lexical:<model.json> | external:<command>."""
    spec = spec or os.environ.get("TCSI_BACKEND")
    if not spec:
        raise UsageError("no backend given (--backend or TCSI_BACKEND)")
    kind, _, arg = spec.partition(":")
    if not arg:
        raise UsageError(f"malformed backend spec {spec!r}")
    if kind == "oracle":
        return attach_oracle(_load_corpus(arg, lenient=True))
    if kind == "lexical":
        return lexical_mod.LexicalBackend.load(arg)
    if kind == "external":
        return external_mod.open_external_backend(arg)
    raise UsageError(f"unknown backend kind {kind!r}")


def _parse_ratios(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise UsageError(f"expected three comma-separated ratios, got {text!r}")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError:
        raise UsageError(f"non-numeric ratio in {text!r}") from None


def cmd_validate(args) -> int:
    corpus = _load_corpus(args.input, lenient=True)
    report = corpus_mod.validate(corpus)
    print(report.to_json())
    return 0 if report.ok else 1


def cmd_stats(args) -> int:
    stats = corpus_mod.compute_stats(_load_corpus(args.input, lenient=True))
    print(stats.to_json() if args.format == "json" else stats.to_table())
    return 0


def cmd_split(args) -> int:
    ratios = _parse_ratios(args.ratios)
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise UsageError(f"ratios must sum to 1, got {sum(ratios)}")
    corpus = _load_corpus(args.input, lenient=True)
    assignment = corpus_mod.split(corpus, ratios, args.seed, unit=args.unit)
    output = assignment.to_json()
    if args.out:
        Path(args.out).write_text(output)
        log.info("wrote split to %s", args.out)
    else:
        print(output)
    return 0


def cmd_train(args) -> int:
    corpus = _load_corpus(args.input, lenient=True)
    if args.splits:
        splits = corpus_mod.SplitAssignment.from_json(Path(args.splits).read_text())
    else:
        splits = corpus_mod.split(corpus, (0.8, 0.1, 0.1), args.seed)
    config = lexical_mod.TrainConfig(epochs=args.epochs, learning_rate=args.lr,
                                     seed=args.seed, batch_size=args.batch_size,
                                     alternation=args.alternation)
    result = lexical_mod.train_multitask(corpus, splits, config)
    result.backend.save(args.out)
    log.info("model written to %s", args.out)
    print(json.dumps({"model": args.out, "validation": result.validation,
                      "final_train_loss": {t: ls[-1] for t, ls in
                                           result.epoch_losses.items()}},
                     indent=2))
    return 0


def cmd_summarize(args) -> int:
    backend = open_backend(args.backend)
    try:
        text = Path(args.input).read_text(encoding="utf-8")
        doc = RawDocument(source_id=Path(args.input).name, body=text)
        selection = pipeline_mod.TopicSelection.parse(args.topics)
        opts = pipeline_mod.SummarizeOptions(workers=args.workers)
        summary = pipeline_mod.summarize(doc, selection, backend, opts)
        print(pipeline_mod.render(summary, args.format))
    finally:
        backend.close()
    return 0


def cmd_evaluate(args) -> int:
    corpus = _load_corpus(args.input, lenient=True)
    splits = corpus_mod.SplitAssignment.from_json(Path(args.splits).read_text())
    backend = open_backend(args.backend)
    try:
        by_id = corpus.by_id()
        test_ids = splits.ids("importance", "test")
        sentences = [by_id[sid] for sid in test_ids]
        if args.slice_length:
            report = bench_mod.slice_by_length(sentences, args.slice_length, backend)
            print(report.to_json())
        else:
            metrics = bench_mod._evaluate_slice(
                sentences, backend, pipeline_mod.SummarizeOptions())
            print(json.dumps(metrics.as_dict(), indent=2))
    finally:
        backend.close()
    return 0


def cmd_bench(args) -> int:
    if args.input:
        corpus = _load_corpus(args.input, lenient=True)
        docs = [[s.text for s in corpus.sentences()]]
        factory = lambda: attach_oracle(corpus)  # noqa: E731
    else:
        texts = [f"Synthetic policy sentence number {i} about data handling."
                 for i in range(args.sentences)]
        docs = [texts]
        delay = args.delay_ms / 1000.0
        factory = lambda: bench_mod.SyntheticBackend(encode_delay=delay)  # noqa: E731
    report = bench_mod.run_efficiency(docs, factory,
                                      pipeline_mod.TopicSelection.all(),
                                      exhaustive=args.exhaustive)
    print(report.to_json() if args.format == "json" else report.to_table())
    return 0


def cmd_backend_check(args) -> int:
    violations = external_mod.run_conformance(args.command, args.timeout_ms)
    print(json.dumps({"ok": not violations, "violations": violations}, indent=2))
    return 0 if not violations else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polsum",
        description="Topic-controlled privacy-policy summarization engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a corpus file against all invariants")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("stats", help="corpus label statistics")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=["table", "json"], default="table")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="deterministic train/validation/test split")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--unit", choices=["sentence", "document"], default="sentence")
    p.add_argument("--out")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train the lexical baseline backend")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--splits")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--alternation", choices=["per-batch", "per-epoch"],
                   default="per-batch")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("summarize", help="summarize a policy document")
    p.add_argument("--in", dest="input", required=True,
                   help=".html or .txt policy document")
    p.add_argument("--topics", default="all",
                   help="comma-separated topic names or 'all'")
    p.add_argument("--backend")
    p.add_argument("--format", choices=["json", "markdown", "html"], default="json")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("evaluate", help="evaluate a backend on a test split")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--splits", required=True)
    p.add_argument("--backend")
    p.add_argument("--slice-length", type=int, default=0,
                   help="also report on the k longest/shortest test sentences")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="shared vs per-task encoding efficiency")
    p.add_argument("--in", dest="input",
                   help="corpus file (default: synthetic workload)")
    p.add_argument("--sentences", type=int, default=1000)
    p.add_argument("--delay-ms", type=float, default=0.0)
    p.add_argument("--exhaustive", action="store_true")
    p.add_argument("--format", choices=["table", "json"], default="table")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("backend-check",
                       help="run the wire-protocol conformance suite")
    p.add_argument("--command", required=True)
    p.add_argument("--timeout-ms", type=int, default=30_000)
    p.set_defaults(func=cmd_backend_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        log.error("%s", exc)
        return 2
    except (corpus_mod.BadRatios,) as exc:
        parser.print_usage(sys.stderr)
        log.error("%s", exc)
        return 2
    except (corpus_mod.CorpusError, metrics_mod.MetricError, OSError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
