"""Word n-gram tf-idf vectorization.

Exact formulas: smooth idf = ln((1+n)/(1+df)) + 1, sublinear tf = 1 + ln(tf),
L2 normalization. Vocabulary indices are assigned in lexicographic n-gram
order so fits are reproducible across runs and platforms.
"""

from __future__ import annotations

import json
import math
import unicodedata
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus import word_tokenize

FORMAT_VERSION = 1


class EmptyVocabularyError(ValueError):
    """No n-gram survived fitting (all documents empty or filtered out)."""


@dataclass(frozen=True)
class TfidfConfig:
    ngram_min: int = 2
    ngram_max: int = 4
    min_df: int = 1
    max_features: int | None = None
    strip_accents: bool = True  # NFKD decomposition, combining marks removed
    lowercase: bool = True
    smooth_idf: bool = True
    sublinear_tf: bool = True
    norm: str = "l2"

    def __post_init__(self) -> None:
        if not (1 <= self.ngram_min <= self.ngram_max):
            raise ValueError(f"need 1 <= ngram_min <= ngram_max, got {self.ngram_min}..{self.ngram_max}")
        if self.min_df < 1:
            raise ValueError("min_df must be >= 1")
        if self.norm not in ("l2", "none"):
            raise ValueError(f"unsupported norm {self.norm!r}")


def strip_accents_unicode(text: str) -> str:
    """NFKD-decompose and drop combining marks."""
    decomposed = unicodedata.normalize("NFKD", text)
    return "".join(ch for ch in decomposed if not unicodedata.combining(ch))


def normalize_token(token: str, lowercase: bool = True, strip_accents: bool = True) -> str:
    if lowercase:
        token = token.lower()
    if strip_accents:
        token = strip_accents_unicode(token)
    return token


def extract_ngrams(tokens: list[str], n_min: int, n_max: int) -> list[str]:
    """All contiguous n-grams for n in [n_min, n_max], space-joined, document order."""
    out: list[str] = []
    count = len(tokens)
    for n in range(n_min, n_max + 1):
        if n > count:
            break
        for i in range(count - n + 1):
            out.append(" ".join(tokens[i : i + n]))
    return out


@dataclass(frozen=True, eq=False)
class SparseVector:
    """Sorted (index, value) pairs; optionally L2-normalized."""

    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.indices.shape != self.values.shape:
            raise ValueError("indices and values must have equal length")
        if self.indices.size and np.any(np.diff(self.indices) <= 0):
            raise ValueError("indices must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")

    @classmethod
    def from_pairs(cls, pairs: dict[int, float]) -> "SparseVector":
        idx = np.array(sorted(pairs), dtype=np.int64)
        vals = np.array([pairs[i] for i in idx], dtype=np.float64)
        return cls(idx, vals)

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def norm(self) -> float:
        return float(np.sqrt(self.values @ self.values)) if self.values.size else 0.0

    def to_dense(self, dim: int) -> np.ndarray:
        dense = np.zeros(dim, dtype=np.float64)
        dense[self.indices] = self.values
        return dense


EMPTY_VECTOR = SparseVector(np.array([], dtype=np.int64), np.array([], dtype=np.float64))


@dataclass(frozen=True)
class TfidfModel:
    vocabulary: dict[str, int]
    idf: np.ndarray
    df: np.ndarray
    n_docs: int
    config: TfidfConfig
    feature_names: tuple[str, ...] = field(default=(), compare=False)

    @property
    def n_features(self) -> int:
        return len(self.vocabulary)


def _compute_idf(df: np.ndarray, n_docs: int, smooth: bool) -> np.ndarray:
    if smooth:
        return np.log((1.0 + n_docs) / (1.0 + df)) + 1.0
    return np.log(n_docs / df) + 1.0


def document_ngrams(doc: str, config: TfidfConfig) -> list[str]:
    """Tokenize, normalize per token, then enumerate n-grams.

    Tokenizing the original text (rather than a normalized copy) keeps the
    n-gram sequence in one-to-one correspondence with the document's token
    spans, which is what makes highlight alignment exact.
    """
    tokens = [
        normalize_token(t.text, config.lowercase, config.strip_accents)
        for t in word_tokenize(doc)
    ]
    return extract_ngrams(tokens, config.ngram_min, config.ngram_max)


def fit_tfidf(docs: list[str], config: TfidfConfig | None = None) -> TfidfModel:
    """Fit vocabulary, document frequencies and idf weights over ``docs``."""
    if not docs:
        raise ValueError("cannot fit tf-idf on an empty document list")
    config = config or TfidfConfig()

    df_counts: Counter[str] = Counter()
    tf_totals: Counter[str] = Counter()
    for doc in docs:
        grams = document_ngrams(doc, config)
        tf_totals.update(grams)
        df_counts.update(set(grams))

    terms = [t for t, c in df_counts.items() if c >= config.min_df]
    if config.max_features is not None and len(terms) > config.max_features:
        # keep the most frequent terms corpus-wide, ties by term
        terms.sort(key=lambda t: (-tf_totals[t], t))
        terms = terms[: config.max_features]
    terms.sort()
    if not terms:
        raise EmptyVocabularyError("empty vocabulary: no n-gram met the fit criteria")

    vocabulary = {term: i for i, term in enumerate(terms)}
    df = np.array([df_counts[t] for t in terms], dtype=np.int64)
    idf = _compute_idf(df, len(docs), config.smooth_idf)
    return TfidfModel(
        vocabulary=vocabulary,
        idf=idf,
        df=df,
        n_docs=len(docs),
        config=config,
        feature_names=tuple(terms),
    )


def transform(model: TfidfModel, doc: str) -> SparseVector:
    """Vectorize one document against a fitted model.

    Out-of-vocabulary n-grams are ignored; documents with no in-vocabulary
    n-gram map to the zero vector.
    """
    counts: Counter[int] = Counter()
    for gram in document_ngrams(doc, model.config):
        idx = model.vocabulary.get(gram)
        if idx is not None:
            counts[idx] += 1
    if not counts:
        return EMPTY_VECTOR

    indices = np.array(sorted(counts), dtype=np.int64)
    tf = np.array([counts[i] for i in indices], dtype=np.float64)
    if model.config.sublinear_tf:
        tf = 1.0 + np.log(tf)
    weights = tf * model.idf[indices]
    if model.config.norm == "l2":
        scale = math.sqrt(float(weights @ weights))
        if scale > 0:
            weights = weights / scale
    return SparseVector(indices, weights)


def transform_many(model: TfidfModel, docs: list[str]) -> list[SparseVector]:
    return [transform(model, doc) for doc in docs]


def to_csr(vectors: list[SparseVector], n_features: int):
    """Stack sparse vectors into a scipy CSR matrix (rows = documents)."""
    from scipy import sparse

    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    for i, vec in enumerate(vectors):
        indptr[i + 1] = indptr[i] + vec.nnz
    if indptr[-1] == 0:
        return sparse.csr_matrix((len(vectors), n_features), dtype=np.float64)
    indices = np.concatenate([v.indices for v in vectors if v.nnz])
    data = np.concatenate([v.values for v in vectors if v.nnz])
    return sparse.csr_matrix((data, indices, indptr), shape=(len(vectors), n_features))


def save_tfidf(model: TfidfModel, path: str | Path) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": "tfidf",
        "config": asdict(model.config),
        "vocabulary": list(model.feature_names),
        "df": model.df.tolist(),
        "n_docs": model.n_docs,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_tfidf(path: str | Path) -> TfidfModel:
    """Load a serialized model; idf is recomputed from df as an invariant check."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("kind") != "tfidf":
        raise ValueError(f"{path}: not a tf-idf model file")
    if payload.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {payload.get('format_version')}")
    config = TfidfConfig(**payload["config"])
    terms = list(payload["vocabulary"])
    if terms != sorted(terms):
        raise ValueError(f"{path}: vocabulary is not in lexicographic order")
    df = np.array(payload["df"], dtype=np.int64)
    if df.size != len(terms):
        raise ValueError(f"{path}: df length does not match vocabulary size")
    n_docs = int(payload["n_docs"])
    return TfidfModel(
        vocabulary={t: i for i, t in enumerate(terms)},
        idf=_compute_idf(df, n_docs, config.smooth_idf),
        df=df,
        n_docs=n_docs,
        config=config,
        feature_names=tuple(terms),
    )
