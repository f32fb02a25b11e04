"""Linguistic comparisons and topic keywords.

Sentences that contain highlighted evidence are compared against the rest on
part-of-speech proportions and length via seeded two-sided permutation
tests. Topic keywords come from class-based tf-idf over document clusters
(seeded spherical k-means stands in for a full density-based pipeline).
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .corpus import Corpus, split_sentences, word_tokenize
from .evidence import Highlight
from .features import normalize_token


class PosTag(str, Enum):
    NOUN = "NOUN"
    VERB = "VERB"
    ADJ = "ADJ"
    ADV = "ADV"
    PRON = "PRON"
    OTHER = "OTHER"


REPORTED_TAGS = (PosTag.NOUN, PosTag.VERB, PosTag.ADJ, PosTag.ADV, PosTag.PRON)


class Tagger(Protocol):
    def tag(self, tokens: Sequence[str]) -> list[PosTag]: ...


_PRONOUNS = frozenset(
    """i you he she it we they me him her us them my your his its our their
    mine yours hers ours theirs myself yourself himself herself itself
    ourselves themselves this that these those who whom someone anyone
    everyone nobody something anything everything nothing""".split()
)
_VERBS = frozenset(
    """be am is are was were been being do does did have has had will would
    can could shall should may might must go goes went gone get got make made
    know think feel felt want wanted need say said see take keep let tell
    try call cry die live sleep eat hurt end stop start""".split()
)
_ADJECTIVES = frozenset(
    """good bad sad happy tired alone empty dark lost numb afraid scared
    angry broken cold quiet heavy small big new old long last same free
    better worse worst""".split()
)
_ADVERBS = frozenset(
    """very never always often soon now then here there too also again
    really maybe perhaps almost just still already yet away back down up
    even only""".split()
)
_CLOSED_OTHER = frozenset(
    """the a an and or but if of to in on at for with from by as so not no
    when while because about into over under between through during before
    after above below once than s t""".split()
)

_ADV_SUFFIXES = ("ly",)
_VERB_SUFFIXES = ("ing", "ed", "ify", "ize", "ise")
_ADJ_SUFFIXES = ("ous", "ful", "ive", "able", "ible", "less", "ish", "al", "ic")
_NOUN_SUFFIXES = ("ness", "tion", "sion", "ment", "ity", "ship", "hood", "ism", "ist")


@dataclass(frozen=True)
class HeuristicTagger:
    """Lexicon + suffix tagger, deterministic; exists so tests run hermetically.

    Unknown tokens fall back to ``fallback`` (NOUN by default, OTHER also
    supported). Accepting pre-tagged input instead is always possible via the
    Tagger protocol.
    """

    fallback: PosTag = PosTag.NOUN

    def tag(self, tokens: Sequence[str]) -> list[PosTag]:
        out: list[PosTag] = []
        for token in tokens:
            word = token.lower()
            if word in _PRONOUNS:
                out.append(PosTag.PRON)
            elif word in _VERBS:
                out.append(PosTag.VERB)
            elif word in _ADJECTIVES:
                out.append(PosTag.ADJ)
            elif word in _ADVERBS:
                out.append(PosTag.ADV)
            elif word in _CLOSED_OTHER:
                out.append(PosTag.OTHER)
            elif word.endswith(_ADV_SUFFIXES) and len(word) > 3:
                out.append(PosTag.ADV)
            elif word.endswith(_VERB_SUFFIXES) and len(word) > 4:
                out.append(PosTag.VERB)
            elif word.endswith(_ADJ_SUFFIXES) and len(word) > 4:
                out.append(PosTag.ADJ)
            elif word.endswith(_NOUN_SUFFIXES) and len(word) > 4:
                out.append(PosTag.NOUN)
            else:
                out.append(self.fallback)
        return out


def tag_pos(tokens: Sequence[str], tagger: Tagger | None = None) -> list[PosTag]:
    """One tag per token; deterministic given the tagger."""
    tagger = tagger or HeuristicTagger()
    tags = tagger.tag(tokens)
    if len(tags) != len(tokens):
        raise ValueError("tagger must return one tag per token")
    return tags


# ---------------------------------------------------------------------------
# Permutation testing


@dataclass(frozen=True)
class PermutationResult:
    observed_diff: float
    p_value: float
    n_permutations: int
    seed: int


def permutation_test(
    group_a: Sequence[float],
    group_b: Sequence[float],
    n_permutations: int = 100_000,
    seed: int = 0,
) -> PermutationResult:
    """Two-sided label-shuffling test of the difference in means.

    p = (1 + #{|perm diff| >= |observed|}) / (1 + n_permutations), so p is
    never zero. Seeded and reproducible; permutations are evaluated in
    vectorized chunks.
    """
    a = np.asarray(group_a, dtype=np.float64)
    b = np.asarray(group_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("both groups must be non-empty")
    observed = float(a.mean() - b.mean())
    threshold = abs(observed) - 1e-12 * max(1.0, abs(observed))

    combined = np.concatenate([a, b])
    na = a.size
    rng = np.random.default_rng(seed)
    exceed = 0
    remaining = n_permutations
    chunk_rows = max(1, min(n_permutations, 10_000_000 // combined.size))
    while remaining > 0:
        rows = min(chunk_rows, remaining)
        mat = np.tile(combined, (rows, 1))
        rng.permuted(mat, axis=1, out=mat)
        diffs = mat[:, :na].mean(axis=1) - mat[:, na:].mean(axis=1)
        exceed += int(np.count_nonzero(np.abs(diffs) >= threshold))
        remaining -= rows
    p_value = (1 + exceed) / (1 + n_permutations)
    return PermutationResult(
        observed_diff=observed, p_value=p_value, n_permutations=n_permutations, seed=seed
    )


# ---------------------------------------------------------------------------
# Important-vs-other sentence comparison


@dataclass(frozen=True)
class ComparisonRow:
    name: str
    mean_important: float
    mean_other: float
    diff: float
    p_value: float


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple[ComparisonRow, ...]
    n_important: int
    n_other: int
    n_permutations: int
    seed: int

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tag", "mean_important", "mean_other", "diff", "p_value"])
            for row in self.rows:
                writer.writerow([
                    row.name,
                    f"{row.mean_important:.6f}",
                    f"{row.mean_other:.6f}",
                    f"{row.diff:.6f}",
                    f"{row.p_value:.6f}",
                ])


def compare_important_vs_other(
    corpus: Corpus,
    highlights: list[Highlight],
    n_permutations: int = 10_000,
    seed: int = 0,
    tagger: Tagger | None = None,
    include_titles: bool = True,
) -> ComparisonReport:
    """Compare sentences containing highlights against the rest.

    Rows: proportion of each reported PoS tag per sentence, plus sentence
    length in tokens; each compared with a seeded permutation test.
    """
    tagger = tagger or HeuristicTagger()
    spans_by_post: dict[str, list[Highlight]] = {}
    for h in highlights:
        spans_by_post.setdefault(h.post_id, []).append(h)

    tag_props: dict[PosTag, dict[bool, list[float]]] = {
        tag: {True: [], False: []} for tag in REPORTED_TAGS
    }
    lengths: dict[bool, list[float]] = {True: [], False: []}

    for user in corpus.users:
        for post in user.posts:
            doc = post.document(include_titles)
            post_highlights = spans_by_post.get(post.post_id, [])
            for sentence in split_sentences(doc):
                tokens = [t.text for t in word_tokenize(sentence.span.text)]
                if not tokens:
                    continue
                important = any(
                    h.span.start < sentence.span.end and h.span.end > sentence.span.start
                    for h in post_highlights
                )
                counts = Counter(tag_pos(tokens, tagger))
                for tag in REPORTED_TAGS:
                    tag_props[tag][important].append(counts.get(tag, 0) / len(tokens))
                lengths[important].append(float(len(tokens)))

    if not lengths[True] or not lengths[False]:
        raise ValueError(
            "need both sentence groups non-empty "
            f"(important={len(lengths[True])}, other={len(lengths[False])})"
        )

    rows: list[ComparisonRow] = []
    for name, groups in [(tag.value, tag_props[tag]) for tag in REPORTED_TAGS] + [
        ("length", lengths)
    ]:
        result = permutation_test(groups[True], groups[False], n_permutations, seed)
        rows.append(
            ComparisonRow(
                name=name,
                mean_important=float(np.mean(groups[True])),
                mean_other=float(np.mean(groups[False])),
                diff=result.observed_diff,
                p_value=result.p_value,
            )
        )
    return ComparisonReport(
        rows=tuple(rows),
        n_important=len(lengths[True]),
        n_other=len(lengths[False]),
        n_permutations=n_permutations,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Topic keywords over clusters


def ctfidf(
    clusters: list[list[str]], top_k: int = 10
) -> list[list[tuple[str, float]]]:
    """Class-based tf-idf keywords per cluster.

    score(term, cluster) = tf_{term,cluster} * ln(1 + A / f_term), where the
    cluster's documents are concatenated for counting, f_term is the term's
    corpus-wide count and A the average per-cluster token count. Returns the
    top-k (term, score) pairs per cluster, ties broken by term.
    """
    if len(clusters) < 2:
        raise ValueError("need at least two clusters")
    if any(not docs for docs in clusters):
        raise ValueError("every cluster must contain at least one document")

    per_cluster: list[Counter[str]] = []
    corpus_counts: Counter[str] = Counter()
    for docs in clusters:
        counts: Counter[str] = Counter()
        for doc in docs:
            counts.update(normalize_token(t.text) for t in word_tokenize(doc))
        per_cluster.append(counts)
        corpus_counts.update(counts)

    total_tokens = sum(corpus_counts.values())
    if total_tokens == 0:
        raise ValueError("clusters contain no word tokens")
    avg_per_cluster = total_tokens / len(clusters)

    keywords: list[list[tuple[str, float]]] = []
    for counts in per_cluster:
        scored = [
            (term, tf * math.log(1.0 + avg_per_cluster / corpus_counts[term]))
            for term, tf in counts.items()
        ]
        scored.sort(key=lambda ts: (-ts[1], ts[0]))
        keywords.append(scored[:top_k])
    return keywords


def cluster_docs(
    vectors: Sequence[np.ndarray] | np.ndarray,
    k: int,
    seed: int = 0,
    max_iterations: int = 100,
) -> np.ndarray:
    """Seeded spherical k-means over unit vectors; returns cluster ids.

    Initialization is k-means++ style on cosine distance; empty clusters are
    reseeded with the point farthest from every centroid. Deterministic for
    a given seed.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("vectors must be a 2-D array")
    n = X.shape[0]
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise ValueError(f"k={k} exceeds number of documents {n}")
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    X = np.divide(X, norms, out=np.zeros_like(X), where=norms > 0)

    rng = np.random.default_rng(seed)
    centroids = np.empty((k, X.shape[1]), dtype=np.float64)
    centroids[0] = X[int(rng.integers(n))]
    for c in range(1, k):
        sims = X @ centroids[:c].T
        dist = np.clip(1.0 - sims.max(axis=1), 0.0, None)
        weights = dist * dist
        if weights.sum() <= 0:
            centroids[c] = X[int(rng.integers(n))]
        else:
            centroids[c] = X[int(rng.choice(n, p=weights / weights.sum()))]

    assignment = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iterations):
        sims = X @ centroids.T
        new_assignment = np.argmax(sims, axis=1)
        for c in range(k):
            if not np.any(new_assignment == c):
                worst = int(np.argmin(sims.max(axis=1)))
                new_assignment[worst] = c
                sims[worst, :] = -np.inf
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        for c in range(k):
            members = X[assignment == c]
            center = members.mean(axis=0)
            norm = float(np.linalg.norm(center))
            if norm > 0:
                centroids[c] = center / norm
    return assignment
