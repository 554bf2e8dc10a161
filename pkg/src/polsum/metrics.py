"""Evaluation primitives: P/R/F1 reports, ROUGE-1/2/L and Cohen's Kappa.

ROUGE tokenization is fixed (lowercase, alphanumeric runs) and versioned so
scores are reproducible across runs.
"""
from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

ROUGE_TOKENIZER_VERSION = "rouge-tok-v1"

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class MetricError(Exception):
    pass


class InstanceMismatch(MetricError):
    pass


class UnknownLabel(MetricError):
    pass


class EmptyAfterTokenization(MetricError):
    pass


class LengthMismatch(MetricError):
    pass


class EmptyInput(MetricError):
    pass


def rouge_tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float


def _prf(overlap: float, n_cand: int, n_ref: int) -> RougeScore:
    p = overlap / n_cand if n_cand else 0.0
    r = overlap / n_ref if n_ref else 0.0
    f = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
    return RougeScore(p, r, f)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: str, reference: str, n: int) -> RougeScore:
    """Clipped n-gram overlap precision/recall/F1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cand = rouge_tokenize(candidate)
    ref = rouge_tokenize(reference)
    if not cand or not ref:
        raise EmptyAfterTokenization("candidate and reference must tokenize non-empty")
    cand_grams = _ngrams(cand, n)
    ref_grams = _ngrams(ref, n)
    overlap = sum((cand_grams & ref_grams).values())
    return _prf(overlap, sum(cand_grams.values()), sum(ref_grams.values()))


def lcs_length(a: Sequence[Hashable], b: Sequence[Hashable]) -> int:
    """Longest common subsequence length (two-row dynamic program)."""
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0]
        append = curr.append
        for j, y in enumerate(b):
            if x == y:
                append(prev[j] + 1)
            else:
                p = prev[j + 1]
                c = curr[j]
                append(p if p >= c else c)
        prev = curr
    return prev[len(b)]


def rouge_l(candidate: str, reference: str) -> RougeScore:
    """LCS-based precision/recall/F1 over word tokens."""
    cand = rouge_tokenize(candidate)
    ref = rouge_tokenize(reference)
    if not cand or not ref:
        raise EmptyAfterTokenization("candidate and reference must tokenize non-empty")
    lcs = lcs_length(cand, ref)
    return _prf(lcs, len(cand), len(ref))


@dataclass
class ClassStats:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class ClassificationReport:
    per_class: dict[str, ClassStats]
    micro_f1: float
    macro_f1: float
    zero_support: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({
            "per_class": {k: vars(v) for k, v in self.per_class.items()},
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "zero_support": self.zero_support,
        }, ensure_ascii=False, indent=2)

    def to_table(self) -> str:
        rows = [("Class", "P", "R", "F1", "Support")]
        for name, st in self.per_class.items():
            rows.append((name, f"{st.precision:.4f}", f"{st.recall:.4f}",
                         f"{st.f1:.4f}", str(st.support)))
        rows.append(("micro", "", "", f"{self.micro_f1:.4f}", ""))
        rows.append(("macro", "", "", f"{self.macro_f1:.4f}", ""))
        widths = [max(len(r[i]) for r in rows) for i in range(5)]
        return "\n".join("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)).rstrip()
                         for row in rows)


def _as_sets(assignments: Mapping[str, object]) -> dict[str, set]:
    out = {}
    for key, val in assignments.items():
        if isinstance(val, (set, frozenset, list, tuple)):
            out[key] = set(val)
        else:
            out[key] = {val}
    return out


def classification_report(gold: Mapping[str, object], pred: Mapping[str, object],
                          label_set: Iterable[str]) -> ClassificationReport:
    """Per-class P/R/F1 with micro (pooled counts) and macro (unweighted mean).

    ``gold``/``pred`` map instance ids either to one label (single-label) or to
    a label collection (multi-label, scored per class as binary decisions).
    Classes with zero gold support score f1=0 and are flagged.
    """
    labels = list(label_set)
    label_lookup = set(labels)
    if set(gold) != set(pred):
        raise InstanceMismatch("gold and pred must cover the same instance ids")
    if not gold:
        raise InstanceMismatch("no instances to evaluate")
    gold_sets = _as_sets(gold)
    pred_sets = _as_sets(pred)
    for mapping in (gold_sets, pred_sets):
        for ls in mapping.values():
            unknown = ls - label_lookup
            if unknown:
                raise UnknownLabel(f"labels outside label_set: {sorted(unknown)}")
    tp = Counter()
    fp = Counter()
    fn = Counter()
    for key in gold_sets:
        g, p = gold_sets[key], pred_sets[key]
        for lab in p & g:
            tp[lab] += 1
        for lab in p - g:
            fp[lab] += 1
        for lab in g - p:
            fn[lab] += 1
    per_class: dict[str, ClassStats] = {}
    zero_support: list[str] = []
    for lab in labels:
        support = tp[lab] + fn[lab]
        prec = tp[lab] / (tp[lab] + fp[lab]) if (tp[lab] + fp[lab]) else 0.0
        rec = tp[lab] / support if support else 0.0
        f1 = 2 * prec * rec / (prec + rec) if (prec + rec) else 0.0
        if support == 0:
            zero_support.append(lab)
        per_class[lab] = ClassStats(prec, rec, f1, support)
    total_tp = sum(tp[lab] for lab in labels)
    total_fp = sum(fp[lab] for lab in labels)
    total_fn = sum(fn[lab] for lab in labels)
    micro_p = total_tp / (total_tp + total_fp) if (total_tp + total_fp) else 0.0
    micro_r = total_tp / (total_tp + total_fn) if (total_tp + total_fn) else 0.0
    micro_f1 = 2 * micro_p * micro_r / (micro_p + micro_r) if (micro_p + micro_r) else 0.0
    macro_f1 = sum(st.f1 for st in per_class.values()) / len(labels)
    return ClassificationReport(per_class, micro_f1, macro_f1, zero_support)


@dataclass(frozen=True)
class KappaScore:
    kappa: float
    po: float
    pe: float
    degenerate: bool = False


def cohens_kappa(rater_a: Sequence[Hashable], rater_b: Sequence[Hashable]) -> KappaScore:
    """Chance-corrected agreement (po - pe) / (1 - pe) between two raters."""
    if len(rater_a) != len(rater_b):
        raise LengthMismatch(f"{len(rater_a)} vs {len(rater_b)} items")
    n = len(rater_a)
    if n == 0:
        raise EmptyInput("no items")
    po = sum(1 for x, y in zip(rater_a, rater_b) if x == y) / n
    count_a = Counter(rater_a)
    count_b = Counter(rater_b)
    pe = sum(count_a[lab] * count_b[lab] for lab in count_a) / (n * n)
    if pe >= 1.0:
        # Both raters constant on the same label: agreement is trivially total
        # or contradiction is impossible; kappa is undefined by the formula.
        return KappaScore(1.0 if po == 1.0 else 0.0, po, pe, degenerate=True)
    return KappaScore((po - pe) / (1.0 - pe), po, pe)


def average_pairwise_kappa(raters: Sequence[Sequence[Hashable]]) -> float:
    """Mean Cohen's Kappa over all rater pairs."""
    if len(raters) < 2:
        raise EmptyInput("need at least two raters")
    scores = []
    for i in range(len(raters)):
        for j in range(i + 1, len(raters)):
            scores.append(cohens_kappa(raters[i], raters[j]).kappa)
    return sum(scores) / len(scores)
