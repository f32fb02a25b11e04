"""Highlight and summary quality metrics with pluggable backends.

Highlights are scored by mean-of-max cosine similarity between gold and
predicted spans under an Embedder; summaries by contradiction probabilities
from an NLI judge with gold sentences as premises. Both backends are
interfaces: production runs point at HTTP endpoints, tests use the
deterministic hashed-trigram embedder and scripted NLI stubs.

The precision, weighted-recall and consistency aggregations here are
documented approximations of the shared-task definitions and are isolated
behind named functions so they can be swapped.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from typing import Protocol

import numpy as np
import requests

from .corpus import split_sentences, word_tokenize
from .features import normalize_token

logger = logging.getLogger(__name__)


class EndpointError(RuntimeError):
    """Embedding or NLI endpoint failure."""


class Embedder(Protocol):
    def embed(self, text: str) -> np.ndarray:
        """Unit-norm vector; deterministic per text."""


@dataclass(frozen=True)
class NliJudgment:
    entailment: float
    neutral: float
    contradiction: float

    def __post_init__(self) -> None:
        probs = (self.entailment, self.neutral, self.contradiction)
        if any(p < 0 for p in probs):
            raise ValueError("NLI probabilities must be non-negative")
        if abs(sum(probs) - 1.0) > 1e-6:
            raise ValueError(f"NLI probabilities must sum to 1, got {sum(probs)}")


class NliClient(Protocol):
    def judge(self, premise: str, hypothesis: str) -> NliJudgment: ...


@dataclass(frozen=True)
class HighlightScores:
    recall: float
    precision: float
    weighted_recall: float
    harmonic: float

    def to_dict(self) -> dict:
        return {
            "recall": self.recall,
            "precision": self.precision,
            "weighted_recall": self.weighted_recall,
            "harmonic": self.harmonic,
        }


@dataclass(frozen=True)
class SummaryScores:
    consistency: float
    contradiction: float

    def to_dict(self) -> dict:
        return {"consistency": self.consistency, "contradiction": self.contradiction}


# ---------------------------------------------------------------------------
# Embedders


class HashedTrigramEmbedder:
    """Deterministic test embedder: hashed bag of within-token character trigrams.

    Identical texts embed identically; texts sharing no trigrams land nearly
    orthogonal (signed hashing keeps collision bias small). Not a semantic
    model; it exists so metric structure can be tested hermetically.
    """

    def __init__(self, dim: int = 512):
        self.dim = dim

    def _trigrams(self, text: str):
        for token in word_tokenize(text):
            padded = f"^{normalize_token(token.text)}$"
            for i in range(len(padded) - 2):
                yield padded[i : i + 3]

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        seen_any = False
        for gram in self._trigrams(text):
            digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
            value = int.from_bytes(digest, "big")
            index = value % self.dim
            sign = 1.0 if (value >> 63) & 1 else -1.0
            vec[index] += sign
            seen_any = True
        if not seen_any:
            # no word content at all: fixed deterministic direction
            vec[0] = 1.0
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:  # signed-hash cancellation
            vec[:] = 0.0
            vec[0] = 1.0
            norm = 1.0
        return vec / norm


class HttpEmbedder:
    """Embeddings over HTTP: POST {"texts": [...]} -> {"vectors": [[...]]}."""

    def __init__(self, endpoint: str, timeout: float = 30.0,
                 session: requests.Session | None = None):
        self.endpoint = endpoint
        self.timeout = timeout
        self.session = session or requests.Session()

    def embed_many(self, texts: list[str]) -> list[np.ndarray]:
        try:
            resp = self.session.post(
                self.endpoint, json={"texts": texts}, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise EndpointError(f"embedding endpoint failed: {exc}") from None
        if resp.status_code != 200:
            raise EndpointError(f"embedding endpoint returned HTTP {resp.status_code}")
        try:
            vectors = resp.json()["vectors"]
            arrays = [np.asarray(v, dtype=np.float64) for v in vectors]
        except (ValueError, KeyError, TypeError) as exc:
            raise EndpointError(f"malformed embedding response: {exc}") from None
        if len(arrays) != len(texts):
            raise EndpointError(
                f"embedding endpoint returned {len(arrays)} vectors for {len(texts)} texts"
            )
        out = []
        for arr in arrays:
            norm = float(np.linalg.norm(arr))
            out.append(arr / norm if norm > 0 else arr)
        return out

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]


class HttpNliClient:
    """NLI over HTTP: POST {"premise","hypothesis"} -> three probabilities."""

    def __init__(self, endpoint: str, timeout: float = 30.0,
                 session: requests.Session | None = None):
        self.endpoint = endpoint
        self.timeout = timeout
        self.session = session or requests.Session()

    def judge(self, premise: str, hypothesis: str) -> NliJudgment:
        try:
            resp = self.session.post(
                self.endpoint,
                json={"premise": premise, "hypothesis": hypothesis},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise EndpointError(f"NLI endpoint failed: {exc}") from None
        if resp.status_code != 200:
            raise EndpointError(f"NLI endpoint returned HTTP {resp.status_code}")
        try:
            payload = resp.json()
            return NliJudgment(
                entailment=float(payload["entailment"]),
                neutral=float(payload["neutral"]),
                contradiction=float(payload["contradiction"]),
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise EndpointError(f"malformed NLI response: {exc}") from None


# ---------------------------------------------------------------------------
# Highlight metrics


class _EmbeddingCache:
    def __init__(self, embedder: Embedder):
        self.embedder = embedder
        self._cache: dict[str, np.ndarray] = {}

    def get(self, text: str) -> np.ndarray:
        vec = self._cache.get(text)
        if vec is None:
            vec = self.embedder.embed(text)
            self._cache[text] = vec
        return vec


def _similarity(a: np.ndarray, b: np.ndarray) -> float:
    # cosines below zero carry no signal for span matching; floor keeps
    # every score inside [0, 1]
    return max(0.0, min(1.0, float(a @ b)))


def highlight_recall(gold: list[str], pred: list[str], embedder: Embedder) -> float:
    """Mean over gold spans of the best similarity to any predicted span."""
    if not gold:
        raise ValueError("recall is undefined for an empty gold set")
    if not pred:
        return 0.0
    cache = _EmbeddingCache(embedder)
    pred_vecs = [cache.get(p) for p in pred]
    best = [max(_similarity(cache.get(g), pv) for pv in pred_vecs) for g in gold]
    return float(np.mean(best))


def highlight_precision(gold: list[str], pred: list[str], embedder: Embedder) -> float:
    """Mean over predicted spans of the best similarity to any gold span."""
    if not gold:
        raise ValueError("precision is undefined for an empty gold set")
    if not pred:
        return 0.0
    cache = _EmbeddingCache(embedder)
    gold_vecs = [cache.get(g) for g in gold]
    best = [max(_similarity(cache.get(p), gv) for gv in gold_vecs) for p in pred]
    return float(np.mean(best))


def harmonic(recall: float, precision: float) -> float:
    """Harmonic mean of recall and precision; 0 when both are 0."""
    if recall + precision <= 0.0:
        return 0.0
    return 2.0 * recall * precision / (recall + precision)


def weighted_recall(gold: list[str], pred: list[str], embedder: Embedder) -> float:
    """Length-penalized recall: long best-matches are discounted.

    Each gold span's best-match similarity is scaled by
    min(1, words(gold)/words(best_pred)), so predictions much longer than
    the gold span (e.g. whole sentences) score less. Approximation of the
    shared-task formula; see module docstring.
    """
    if not gold:
        raise ValueError("weighted recall is undefined for an empty gold set")
    if not pred:
        return 0.0
    cache = _EmbeddingCache(embedder)
    pred_vecs = [(p, cache.get(p)) for p in pred]
    total = 0.0
    for g in gold:
        gvec = cache.get(g)
        sims = [_similarity(gvec, pv) for _, pv in pred_vecs]
        best_idx = int(np.argmax(sims))
        best_text = pred_vecs[best_idx][0]
        gold_len = len(word_tokenize(g))
        pred_len = len(word_tokenize(best_text))
        if gold_len == 0 or pred_len == 0:
            ratio = 1.0
        else:
            ratio = min(1.0, gold_len / pred_len)
        total += sims[best_idx] * ratio
    return total / len(gold)


def score_highlights(gold: list[str], pred: list[str], embedder: Embedder) -> HighlightScores:
    r = highlight_recall(gold, pred, embedder)
    p = highlight_precision(gold, pred, embedder)
    return HighlightScores(
        recall=r,
        precision=p,
        weighted_recall=weighted_recall(gold, pred, embedder),
        harmonic=harmonic(r, p),
    )


# ---------------------------------------------------------------------------
# Summary metrics


def summary_scores(gold_sentences: list[str], pred_summary: str, nli: NliClient) -> SummaryScores:
    """Contradiction and consistency of a summary against gold sentences.

    Each gold sentence is the premise; each predicted-summary sentence the
    hypothesis. Per gold sentence the maximum contradiction probability over
    predicted sentences is taken; contradiction is its mean over gold and
    consistency the mean of (1 - max contradiction). Any judge failure
    aborts scoring (no partial results).
    """
    if not gold_sentences:
        raise ValueError("summary scores are undefined without gold sentences")
    pred_sentences = [s.span.text for s in split_sentences(pred_summary)]
    if not pred_sentences:
        logger.warning("empty predicted summary; contradiction 0 by convention")
        return SummaryScores(consistency=1.0, contradiction=0.0)
    per_gold_max = []
    for premise in gold_sentences:
        contradictions = [nli.judge(premise, hyp).contradiction for hyp in pred_sentences]
        per_gold_max.append(max(contradictions))
    contradiction = float(np.mean(per_gold_max))
    consistency = float(np.mean([1.0 - m for m in per_gold_max]))
    return SummaryScores(consistency=consistency, contradiction=contradiction)


# ---------------------------------------------------------------------------
# Per-user evaluation reports


@dataclass(frozen=True)
class EvaluationReport:
    per_user_highlights: dict[str, HighlightScores]
    aggregate_highlights: HighlightScores | None
    per_user_summaries: dict[str, SummaryScores]
    aggregate_summaries: SummaryScores | None

    def to_dict(self) -> dict:
        return {
            "highlights": {
                "per_user": {u: s.to_dict() for u, s in sorted(self.per_user_highlights.items())},
                "aggregate": self.aggregate_highlights.to_dict()
                if self.aggregate_highlights else None,
            },
            "summaries": {
                "per_user": {u: s.to_dict() for u, s in sorted(self.per_user_summaries.items())},
                "aggregate": self.aggregate_summaries.to_dict()
                if self.aggregate_summaries else None,
            },
        }


def evaluate_highlights(
    gold_by_user: dict[str, list[str]],
    pred_by_user: dict[str, list[str]],
    embedder: Embedder,
) -> tuple[dict[str, HighlightScores], HighlightScores]:
    """Per-user scores plus the corpus aggregate.

    Predicted users must be a subset of gold users (extras are listed in the
    error); a gold user with no predictions scores zero recall. The
    aggregate harmonic is the harmonic mean of the mean recall and mean
    precision, matching how corpus-level results are reported.
    """
    extra = sorted(set(pred_by_user) - set(gold_by_user))
    if extra:
        raise ValueError(f"predictions for unknown users: {extra}")
    per_user: dict[str, HighlightScores] = {}
    for user_id in sorted(gold_by_user):
        per_user[user_id] = score_highlights(
            gold_by_user[user_id], pred_by_user.get(user_id, []), embedder
        )
    mean_r = float(np.mean([s.recall for s in per_user.values()]))
    mean_p = float(np.mean([s.precision for s in per_user.values()]))
    aggregate = HighlightScores(
        recall=mean_r,
        precision=mean_p,
        weighted_recall=float(np.mean([s.weighted_recall for s in per_user.values()])),
        harmonic=harmonic(mean_r, mean_p),
    )
    return per_user, aggregate


def evaluate_summaries(
    gold_by_user: dict[str, list[str]],
    pred_by_user: dict[str, str],
    nli: NliClient,
) -> tuple[dict[str, SummaryScores], SummaryScores]:
    extra = sorted(set(pred_by_user) - set(gold_by_user))
    if extra:
        raise ValueError(f"summaries for unknown users: {extra}")
    per_user: dict[str, SummaryScores] = {}
    for user_id in sorted(gold_by_user):
        per_user[user_id] = summary_scores(
            gold_by_user[user_id], pred_by_user.get(user_id, ""), nli
        )
    aggregate = SummaryScores(
        consistency=float(np.mean([s.consistency for s in per_user.values()])),
        contradiction=float(np.mean([s.contradiction for s in per_user.values()])),
    )
    return per_user, aggregate
