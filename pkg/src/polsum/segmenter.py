"""Markup stripping, regex sentence segmentation and input-budget truncation.

The rule set is fixed and versioned so experiment runs stay reproducible:
split at {. ! ? ;} followed by whitespace and a capital letter (or a newline),
guarded by a small abbreviation list; a period inside a token that contains a
digit never splits; newline-delimited lines (headings) are their own sentences.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass

SEGMENTER_VERSION = "segmenter-v1"

# Tokens (with trailing period) that never end a sentence.
ABBREVIATIONS = {
    "i.e.", "e.g.", "etc.", "mr.", "ms.", "mrs.", "dr.", "no.", "u.s.",
    "vs.", "inc.", "ltd.", "co.", "st.",
}

_NAMED_ENTITIES = {
    "amp": "&", "lt": "<", "gt": ">", "quot": '"', "apos": "'", "nbsp": " ",
}

# A tag-like span starts with a letter, slash or '!'; a bare '<' is literal.
_TAG_RE = re.compile(r"</?[a-zA-Z!][^<>]*>")
_ENTITY_RE = re.compile(r"&(#x?[0-9a-fA-F]+|[a-zA-Z]+);")


@dataclass(frozen=True)
class RawDocument:
    source_id: str
    body: str


@dataclass(frozen=True)
class SegmentSentence:
    index: int
    text: str
    start: int
    end: int


@dataclass(frozen=True)
class SegmentedDocument:
    source_id: str
    sentences: tuple[SegmentSentence, ...]

    def to_json(self) -> str:
        return json.dumps({
            "source_id": self.source_id,
            "segmenter_version": SEGMENTER_VERSION,
            "sentences": [{"index": s.index, "text": s.text,
                           "start": s.start, "end": s.end}
                          for s in self.sentences],
        }, ensure_ascii=False, indent=2)


def _decode_entity(match: re.Match) -> str:
    body = match.group(1)
    if body.startswith("#"):
        try:
            code = int(body[2:], 16) if body[1] in "xX" else int(body[1:])
            return chr(code)
        except (ValueError, OverflowError):
            return match.group(0)
    return _NAMED_ENTITIES.get(body.lower(), match.group(0))


def strip_markup(raw: RawDocument | str) -> str:
    """Remove tag-like spans, decode entities and normalize whitespace.

    Paragraph breaks (blank lines or block-level tags) survive as a single
    newline; every other whitespace run collapses to one space.  Unmatched
    ``<`` is kept as literal text.
    """
    text = raw.body if isinstance(raw, RawDocument) else raw
    # Block-level closings/openings imply a paragraph break before tag removal.
    text = re.sub(r"(?i)<\s*br\s*/?\s*>", "\n\n", text)
    text = re.sub(r"(?i)</\s*(p|div|li|ul|ol|h[1-6]|tr|table|section)\s*>", "\n\n", text)
    text = _TAG_RE.sub(" ", text)
    text = _ENTITY_RE.sub(_decode_entity, text)
    out: list[str] = []
    for chunk in re.split(r"\s*\n\s*\n\s*", text.strip()):
        collapsed = re.sub(r"\s+", " ", chunk).strip()
        if collapsed:
            out.append(collapsed)
    return "\n".join(out)


def _is_boundary(text: str, i: int) -> bool:
    """True when the punctuation at position i ends a sentence."""
    ch = text[i]
    j = i + 1
    if j >= len(text) or text[j] == "\n":
        return True
    if not text[j].isspace():
        return False
    k = j
    while k < len(text) and text[k].isspace():
        if text[k] == "\n":
            return True
        k += 1
    if k >= len(text):
        return True
    if not text[k].isupper():
        return False
    if ch == ".":
        start = i
        while start > 0 and not text[start - 1].isspace():
            start -= 1
        token = text[start:i + 1]
        if token.lower() in ABBREVIATIONS:
            return False
        if any(c.isdigit() for c in token):
            return False
    return True


def segment(text: str, source_id: str = "") -> SegmentedDocument:
    """Split markup-free text into ordered sentences with character spans."""
    sentences: list[SegmentSentence] = []

    def emit(start: int, end: int) -> None:
        while start < end and text[start].isspace():
            start += 1
        while end > start and text[end - 1].isspace():
            end -= 1
        if end > start:
            sentences.append(SegmentSentence(len(sentences), text[start:end],
                                             start, end))

    start = 0
    for i, ch in enumerate(text):
        if ch == "\n":
            emit(start, i)
            start = i + 1
        elif ch in ".!?;" and _is_boundary(text, i):
            emit(start, i + 1)
            start = i + 1
    emit(start, len(text))
    return SegmentedDocument(source_id=source_id, sentences=tuple(sentences))


@dataclass(frozen=True)
class TruncatedText:
    text: str
    truncated: bool


def truncate(sentence: str, max_units: int, unit: str = "words") -> TruncatedText:
    """Keep a prefix of at most ``max_units`` words or characters."""
    if max_units < 1:
        raise ValueError("max_units must be >= 1")
    if unit == "words":
        words = sentence.split()
        if len(words) <= max_units:
            return TruncatedText(sentence, False)
        return TruncatedText(" ".join(words[:max_units]), True)
    if unit == "characters":
        if len(sentence) <= max_units:
            return TruncatedText(sentence, False)
        return TruncatedText(sentence[:max_units], True)
    raise ValueError(f"unknown truncation unit {unit!r}")
