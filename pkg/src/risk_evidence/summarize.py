"""Per-user evidence summaries: graph-ranked extractive or LLM abstractive.

The extractive route ranks the user's important sentences with a damped
power iteration over a word-overlap similarity graph and re-emits the top
sentences verbatim in document order. The abstractive route sends the
concatenated content to a chat-completion endpoint with a fixed prompt.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass

import numpy as np

from .corpus import word_tokenize

logger = logging.getLogger(__name__)

# The closing "Analysis:" matters: without it the completion tends to copy
# input verbatim instead of analyzing it.
SUMMARY_PROMPT_TEMPLATE = (
    "As a psychologist and expert therapist, summarize the content by "
    "identifying any indications of suicidal thoughts. Provide evidence from "
    "the text to support your analysis.\n\nPost Body: {content_body}\n\nAnalysis:"
)

# Function words excluded when measuring sentence overlap.
FUNCTION_WORDS = frozenset(
    """the a an and or but if then than that this these those i you he she it
    we they me him her us them my your his its our their of to in on at for
    with from by as is am are was were be been being do does did have has had
    will would can could shall should may might must not no so too very s t
    just there here what when where who whom why how all any both each few
    more most other some such only own same up down out off over under again
    once about""".split()
)


@dataclass(frozen=True)
class SummaryConfig:
    mode: str = "extractive"  # "extractive" | "abstractive"
    max_words: int = 300
    n_sentences: int = 5
    damping: float = 0.85
    convergence_eps: float = 1e-6
    max_iterations: int = 100

    def __post_init__(self) -> None:
        if self.mode not in ("extractive", "abstractive"):
            raise ValueError(f"unknown summary mode {self.mode!r}")
        if not (0.0 < self.damping < 1.0):
            raise ValueError("damping must be in (0, 1)")
        if self.n_sentences < 1:
            raise ValueError("n_sentences must be >= 1")


@dataclass(frozen=True)
class Summary:
    user_id: str
    text: str
    mode: str
    source_sentences: tuple[str, ...] = ()
    prompt_fingerprint: str | None = None

    def to_dict(self) -> dict:
        return {"user_id": self.user_id, "summary": self.text, "mode": self.mode}


def count_words(text: str) -> int:
    """Word count under the shared regex tokenizer."""
    return len(word_tokenize(text))


def truncate_words(text: str, max_words: int) -> str:
    """Cut after the ``max_words``-th word token, preserving the verbatim prefix."""
    tokens = word_tokenize(text)
    if len(tokens) <= max_words:
        return text
    return text[: tokens[max_words - 1].end]


def _content_words(tokens: list[str]) -> set[str]:
    return {t.lower() for t in tokens} - FUNCTION_WORDS


def similarity_matrix(sentence_tokens: list[list[str]]) -> np.ndarray:
    """Pairwise sentence similarity: shared content words over summed log lengths."""
    n = len(sentence_tokens)
    contents = [_content_words(toks) for toks in sentence_tokens]
    lengths = [len(toks) for toks in sentence_tokens]
    weights = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            overlap = len(contents[i] & contents[j])
            if overlap == 0:
                continue
            denom = 0.0
            if lengths[i] > 0 and lengths[j] > 0:
                denom = math.log(lengths[i]) + math.log(lengths[j])
            # single-word sentences make the log denominator vanish
            weight = overlap / denom if denom > 0 else float(overlap)
            weights[i, j] = weights[j, i] = weight
    return weights


def textrank_scores(
    sentences: list[str],
    damping: float = 0.85,
    eps: float = 1e-6,
    max_iterations: int = 100,
) -> tuple[np.ndarray, int, bool]:
    """Damped power iteration; returns (scores, iterations, converged).

    Iterates score_i = (1-d) + d * sum_j w_ij / out_j * score_j until the
    largest per-node delta drops below ``eps``. Nodes with no edges settle at
    the (1-d) baseline; an all-isolated graph is uniform.
    """
    if not sentences:
        raise ValueError("need at least one sentence")
    n = len(sentences)
    if n == 1:
        return np.array([1.0]), 0, True

    tokens = [[t.text for t in word_tokenize(s)] for s in sentences]
    weights = similarity_matrix(tokens)
    out_sums = weights.sum(axis=0)
    transfer = np.divide(
        weights, out_sums[np.newaxis, :], out=np.zeros_like(weights), where=out_sums > 0
    )

    scores = np.ones(n, dtype=np.float64)
    for iteration in range(1, max_iterations + 1):
        updated = (1.0 - damping) + damping * (transfer @ scores)
        delta = float(np.max(np.abs(updated - scores)))
        scores = updated
        if delta < eps:
            return scores, iteration, True
    return scores, max_iterations, False


def textrank(
    sentences: list[str], config: SummaryConfig | None = None
) -> list[tuple[int, float]]:
    """Rank sentences by importance, descending; ties keep original order."""
    config = config or SummaryConfig()
    scores, _, converged = textrank_scores(
        sentences, config.damping, config.convergence_eps, config.max_iterations
    )
    if not converged:
        logger.warning("sentence ranking did not converge within %d iterations",
                       config.max_iterations)
    order = sorted(range(len(sentences)), key=lambda i: (-scores[i], i))
    return [(i, float(scores[i])) for i in order]


def extractive_summary(
    important_sentences: list[str],
    config: SummaryConfig | None = None,
    user_id: str = "",
) -> Summary:
    """Top-ranked important sentences, re-joined verbatim in document order.

    Trailing sentences are dropped whole until the summary fits max_words.
    """
    config = config or SummaryConfig()
    if not important_sentences:
        logger.warning("no important sentences for user %r; empty summary", user_id)
        return Summary(user_id=user_id, text="", mode="extractive")

    ranked = textrank(important_sentences, config)
    chosen = sorted(idx for idx, _ in ranked[: config.n_sentences])
    word_counts = [count_words(important_sentences[i]) for i in chosen]
    while chosen and sum(word_counts) > config.max_words:
        chosen.pop()
        word_counts.pop()
    if not chosen:
        logger.warning("max_words %d too small for any sentence (user %r)",
                       config.max_words, user_id)
    picked = [important_sentences[i] for i in chosen]
    return Summary(
        user_id=user_id,
        text=" ".join(picked),
        mode="extractive",
        source_sentences=tuple(picked),
    )


def abstractive_summary(
    llm,
    content_body: str,
    config: SummaryConfig | None = None,
    user_id: str = "",
) -> Summary:
    """One chat-completion call over the concatenated content.

    ``llm`` is any object with ``complete(prompt) -> response`` where the
    response has a ``text`` attribute (see llm_client.LlmClient). The word
    limit is stated to the model and enforced by truncation afterwards.
    """
    config = config or SummaryConfig(mode="abstractive")
    if not content_body.strip():
        raise ValueError("content_body must be non-empty")
    prompt = SUMMARY_PROMPT_TEMPLATE.format(content_body=content_body)
    response = llm.complete(prompt)
    text = response.text.strip()
    if not text:
        from .llm_client import EmptyResponseError

        raise EmptyResponseError("summary completion returned empty text")
    if count_words(text) > config.max_words:
        text = truncate_words(text, config.max_words)
    return Summary(
        user_id=user_id,
        text=text,
        mode="abstractive",
        prompt_fingerprint=hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16],
    )
