"""Turn important n-gram features back into verbatim text highlights.

Two emission modes: a word-window around each matched feature (clamped to the
enclosing sentence) or the entire enclosing sentence. Duplicate and substring
highlights are removed unless explicitly kept.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

from .corpus import Sentence, Span, TokenSpan, enclosing_sentence
from .features import normalize_token

SOURCE_GOML = "goml"
SOURCE_LLM = "llm"


@dataclass(frozen=True)
class Highlight:
    """A verbatim evidence span within one post."""

    post_id: str
    user_id: str
    span: Span
    source: str = SOURCE_GOML
    feature: str | None = None

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "post_id": self.post_id,
            "start": self.span.start,
            "end": self.span.end,
            "text": self.span.text,
            "source": self.source,
        }


@dataclass(frozen=True)
class HighlightConfig:
    mode: str = "sentence"  # "window" | "sentence"
    window_words: int = 14
    keep_duplicates: bool = False

    def __post_init__(self) -> None:
        if self.mode not in ("window", "sentence"):
            raise ValueError(f"unknown highlight mode {self.mode!r}")
        if self.window_words < 0:
            raise ValueError("window_words must be >= 0")


def align_feature(
    post_text: str,
    tokens: list[TokenSpan],
    feature: str,
    normalizer: Callable[[str], str] = normalize_token,
) -> list[Span]:
    """Find every occurrence of a vocabulary n-gram in the original text.

    An occurrence is a run of consecutive tokens whose normalized forms equal
    the feature's words; the returned span stretches from the first token's
    start to the last token's end, so casing and intervening punctuation are
    preserved verbatim. A feature that never matches yields an empty list
    (an anomaly when the feature came from this document's own vector).
    """
    words = feature.split(" ")
    n = len(words)
    if n == 0 or len(tokens) < n:
        return []
    normalized = [normalizer(t.text) for t in tokens]
    spans: list[Span] = []
    for i in range(len(tokens) - n + 1):
        if normalized[i : i + n] == words:
            spans.append(Span.of(post_text, tokens[i].start, tokens[i + n - 1].end))
    return spans


def _sentence_tokens(tokens: list[TokenSpan], sentence: Sentence) -> list[TokenSpan]:
    return [
        t for t in tokens
        if t.start >= sentence.span.start and t.end <= sentence.span.end
    ]


def window_highlight(
    span: Span,
    sentences: list[Sentence],
    window_words: int = 14,
    *,
    post_text: str,
    tokens: list[TokenSpan],
    post_id: str = "",
    user_id: str = "",
    source: str = SOURCE_GOML,
    feature: str | None = None,
) -> Highlight:
    """Extend a feature span by up to ``window_words`` word tokens per side.

    The window never exceeds the sentence containing the span's start; when a
    side has fewer than ``window_words`` tokens available the highlight snaps
    to that sentence boundary. Spans crossing sentence boundaries are clipped
    to the sentence containing their start.
    """
    sentence = enclosing_sentence(sentences, span.start)
    if sentence is None:
        raise ValueError(f"span start {span.start} lies outside every sentence")
    start = span.start
    end = min(span.end, sentence.span.end)

    in_sentence = _sentence_tokens(tokens, sentence)
    left = [t for t in in_sentence if t.end <= start]
    right = [t for t in in_sentence if t.start >= end]
    if window_words > 0:
        if len(left) > window_words:
            start = left[-window_words].start
        elif left or start > sentence.span.start:
            start = sentence.span.start
        if len(right) > window_words:
            end = right[window_words - 1].end
        elif right or end < sentence.span.end:
            end = sentence.span.end

    return Highlight(
        post_id=post_id,
        user_id=user_id,
        span=Span.of(post_text, start, end),
        source=source,
        feature=feature,
    )


def sentence_highlight(
    span: Span,
    sentences: list[Sentence],
    *,
    post_text: str,
    post_id: str = "",
    user_id: str = "",
    source: str = SOURCE_GOML,
    feature: str | None = None,
) -> Highlight:
    """The entire sentence enclosing the feature span's start."""
    sentence = enclosing_sentence(sentences, span.start)
    if sentence is None:
        raise ValueError(f"span start {span.start} lies outside every sentence")
    return Highlight(
        post_id=post_id,
        user_id=user_id,
        span=Span.of(post_text, sentence.span.start, sentence.span.end),
        source=source,
        feature=feature,
    )


def dedup_highlights(highlights: list[Highlight], keep_duplicates: bool = False) -> list[Highlight]:
    """Remove duplicate and substring highlights, keeping the longest text.

    Within each post: identical spans merge into one; a highlight whose text
    is a proper substring of another's is dropped; of several highlights with
    equal text the earliest span survives. Output is sorted by
    (post_id, start, end). With ``keep_duplicates=True`` the input is
    returned unchanged (the duplicate-retaining submission variant).
    """
    if keep_duplicates:
        return list(highlights)

    by_post: dict[str, list[Highlight]] = {}
    for h in highlights:
        by_post.setdefault(h.post_id, []).append(h)

    kept: list[Highlight] = []
    for post_id in sorted(by_post):
        group = sorted(by_post[post_id], key=lambda h: (h.span.start, h.span.end))
        merged: list[Highlight] = []
        seen_spans: set[tuple[int, int]] = set()
        for h in group:
            key = (h.span.start, h.span.end)
            if key in seen_spans:
                continue
            seen_spans.add(key)
            merged.append(h)
        for i, h in enumerate(merged):
            dominated = False
            for j, other in enumerate(merged):
                if i == j:
                    continue
                if h.span.text == other.span.text:
                    if j < i:  # equal text: earliest span survives
                        dominated = True
                        break
                elif h.span.text in other.span.text:
                    dominated = True
                    break
            if not dominated:
                kept.append(h)
    return kept


def merge_overlapping(highlights: list[Highlight], post_text_by_id: dict[str, str]) -> list[Highlight]:
    """Optionally fuse overlapping (not merely nested) highlights per post."""
    by_post: dict[str, list[Highlight]] = {}
    for h in highlights:
        by_post.setdefault(h.post_id, []).append(h)
    out: list[Highlight] = []
    for post_id in sorted(by_post):
        text = post_text_by_id[post_id]
        group = sorted(by_post[post_id], key=lambda h: (h.span.start, h.span.end))
        current = group[0]
        for h in group[1:]:
            if h.span.start <= current.span.end:
                if h.span.end > current.span.end:
                    current = replace(
                        current, span=Span.of(text, current.span.start, h.span.end)
                    )
            else:
                out.append(current)
                current = h
        out.append(current)
    return out
