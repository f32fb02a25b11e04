"""End-to-end orchestration: train models, emit highlights and summaries.

Three evidence modes, matching the submission configurations:
  goml          - tf-idf + classifier highlights, graph-ranked extractive summary
  goml_plus_llm - classifier sentence highlights, LLM summary over those sentences
  llm           - K-run prompted highlights, LLM summary over whole posts
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from functools import partial
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import Corpus, Post, UserRecord, map_risk_to_binary, split_sentences, word_tokenize
from .evidence import (
    SOURCE_LLM,
    Highlight,
    HighlightConfig,
    align_feature,
    dedup_highlights,
    sentence_highlight,
    window_highlight,
)
from .features import TfidfConfig, TfidfModel, fit_tfidf, normalize_token, transform, transform_many
from .llm_client import LlmClient, llm_extract_highlights, verify_in_text
from .model import (
    ExplainerBaseline,
    LogRegModel,
    SelectionPolicy,
    TrainConfig,
    fit_logreg,
    select_important_array,
    shap_score_array,
)
from .summarize import Summary, SummaryConfig, abstractive_summary, extractive_summary

logger = logging.getLogger(__name__)

SUBSET_TEST = "test"
SUBSET_TASK_A = "taskA"
SUBSET_A_PLUS_E = "a_plus_e"

# user-level subset tags accepted in corpus files; untagged users count as
# the smallest subset so every selector includes them
_SUBSET_MEMBERS = {
    SUBSET_TEST: {"taskA_test"},
    SUBSET_TASK_A: {"taskA_test", "taskA_train"},
    SUBSET_A_PLUS_E: {"taskA_test", "taskA_train", "expert"},
}


def select_subset(corpus: Corpus, selector: str) -> Corpus:
    """Restrict the corpus to a training subset selector."""
    try:
        allowed = _SUBSET_MEMBERS[selector]
    except KeyError:
        raise ValueError(f"unknown subset selector {selector!r}") from None
    users = tuple(
        u for u in corpus.users
        if corpus.subsets.get(u.user_id, "taskA_test") in allowed
    )
    if not users:
        raise ValueError(f"subset selector {selector!r} excludes every user")
    return Corpus(users=users, subsets=corpus.subsets)


def corpus_documents(
    corpus: Corpus, include_titles: bool = True, unit: str = "post"
) -> tuple[list[str], list[int], list[str]]:
    """Documents, binarized labels, and ids at post or user granularity."""
    docs: list[str] = []
    labels: list[int] = []
    ids: list[str] = []
    for user in corpus.users:
        target = map_risk_to_binary(user.label)
        if unit == "post":
            for post in user.posts:
                docs.append(post.document(include_titles))
                labels.append(target)
                ids.append(post.post_id)
        elif unit == "user":
            docs.append("\n\n".join(p.document(include_titles) for p in user.posts))
            labels.append(target)
            ids.append(user.user_id)
        else:
            raise ValueError(f"unknown document unit {unit!r}")
    return docs, labels, ids


@dataclass(frozen=True)
class GomlModels:
    tfidf: TfidfModel
    classifier: LogRegModel
    baseline: ExplainerBaseline
    include_titles: bool = True


def training_fingerprint(docs: list[str], labels: list[int]) -> str:
    digest = hashlib.sha256()
    for doc, label in zip(docs, labels):
        digest.update(str(label).encode())
        digest.update(b"\x00")
        digest.update(doc.encode("utf-8"))
        digest.update(b"\x01")
    return digest.hexdigest()


def train_goml(
    corpus: Corpus,
    tfidf_config: TfidfConfig | None = None,
    train_config: TrainConfig | None = None,
    include_titles: bool = True,
    doc_unit: str = "post",
) -> GomlModels:
    """Fit vectorizer, classifier and explanation baseline on the corpus.

    The explanation baseline (per-feature means) is computed over the same
    documents the classifier was fit on.
    """
    docs, labels, _ = corpus_documents(corpus, include_titles, doc_unit)
    tfidf = fit_tfidf(docs, tfidf_config)
    vectors = transform_many(tfidf, docs)
    classifier = fit_logreg(vectors, labels, train_config, n_features=tfidf.n_features)
    baseline = ExplainerBaseline.from_vectors(vectors, tfidf.n_features)
    return GomlModels(tfidf=tfidf, classifier=classifier, baseline=baseline,
                      include_titles=include_titles)


def goml_post_evidence(
    models: GomlModels,
    post: Post,
    highlight_config: HighlightConfig,
    policy: SelectionPolicy | None = None,
) -> tuple[list[Highlight], list[str]]:
    """Highlights and important sentences for one post.

    Important sentences (the summary source) are always the sentences
    enclosing matched features, regardless of the configured highlight mode.
    """
    doc = post.document(models.include_titles)
    vector = transform(models.tfidf, doc)
    scores = shap_score_array(models.classifier, vector, models.baseline)
    # only features present in this post can be matched back to its text;
    # absent features contribute to the prediction but not to highlights
    present = np.zeros_like(scores)
    if vector.nnz:
        present[vector.indices] = scores[vector.indices]
    selected = select_important_array(present, models.tfidf.feature_names, policy)
    if not selected:
        return [], []

    tokens = word_tokenize(doc)
    sentences = split_sentences(doc)
    cfg = models.tfidf.config
    normalizer = partial(
        normalize_token, lowercase=cfg.lowercase, strip_accents=cfg.strip_accents
    )

    highlights: list[Highlight] = []
    sentence_keys: dict[tuple[int, int], str] = {}
    for fs in selected:
        spans = align_feature(doc, tokens, fs.ngram, normalizer)
        if not spans:
            logger.warning(
                "feature %r scored on post %s but never aligned (anomaly)",
                fs.ngram, post.post_id,
            )
            continue
        for span in spans:
            if highlight_config.mode == "window":
                highlight = window_highlight(
                    span, sentences, highlight_config.window_words,
                    post_text=doc, tokens=tokens,
                    post_id=post.post_id, user_id=post.user_id, feature=fs.ngram,
                )
            else:
                highlight = sentence_highlight(
                    span, sentences, post_text=doc,
                    post_id=post.post_id, user_id=post.user_id, feature=fs.ngram,
                )
            highlights.append(highlight)
            enclosing = sentence_highlight(
                span, sentences, post_text=doc,
                post_id=post.post_id, user_id=post.user_id, feature=fs.ngram,
            )
            key = (enclosing.span.start, enclosing.span.end)
            sentence_keys.setdefault(key, enclosing.span.text)

    deduped = dedup_highlights(highlights, highlight_config.keep_duplicates)
    important = [sentence_keys[key] for key in sorted(sentence_keys)]
    return deduped, important


def goml_user_evidence(
    models: GomlModels,
    user: UserRecord,
    highlight_config: HighlightConfig,
    policy: SelectionPolicy | None = None,
) -> tuple[list[Highlight], list[str]]:
    """Highlights plus important sentences across all of a user's posts."""
    highlights: list[Highlight] = []
    important: list[str] = []
    for post in user.posts:
        post_highlights, post_sentences = goml_post_evidence(
            models, post, highlight_config, policy
        )
        highlights.extend(post_highlights)
        important.extend(post_sentences)
    return highlights, important


def llm_user_highlights(
    client: LlmClient,
    user: UserRecord,
    keep_duplicates: bool = False,
    include_titles: bool = True,
) -> list[Highlight]:
    """The prompted highlight loop over every post of one user."""
    highlights: list[Highlight] = []
    for post in user.posts:
        doc = post.document(include_titles)
        candidates = llm_extract_highlights(
            post, client.params, client, include_title=include_titles
        )
        spans, dropped = verify_in_text([c.text for c in candidates], doc)
        if dropped:
            logger.info("post %s: dropped %d hallucinated candidates",
                        post.post_id, len(dropped))
        for span in spans:
            highlights.append(
                Highlight(post_id=post.post_id, user_id=user.user_id,
                          span=span, source=SOURCE_LLM)
            )
    return dedup_highlights(highlights, keep_duplicates)


def user_summary(
    mode: str,
    user: UserRecord,
    important_sentences: list[str],
    summary_config: SummaryConfig,
    client: LlmClient | None = None,
    include_titles: bool = True,
) -> Summary:
    if mode == "goml":
        return extractive_summary(important_sentences, summary_config, user.user_id)
    if mode == "goml_plus_llm":
        if client is None:
            raise ValueError("goml_plus_llm summaries need an LLM client")
        content = " ".join(important_sentences)
        if not content.strip():
            logger.warning("user %s has no important sentences; empty summary", user.user_id)
            return Summary(user_id=user.user_id, text="", mode="abstractive")
        return abstractive_summary(client, content, summary_config, user.user_id)
    if mode == "llm":
        if client is None:
            raise ValueError("llm summaries need an LLM client")
        content = "\n\n".join(p.document(include_titles) for p in user.posts)
        return abstractive_summary(client, content, summary_config, user.user_id)
    raise ValueError(f"unknown evidence mode {mode!r}")


@dataclass(frozen=True)
class EvidenceRun:
    highlights: list[Highlight]
    summaries: list[Summary]
    errors: list[dict]


def run_evidence(
    corpus: Corpus,
    mode: str,
    models: GomlModels | None = None,
    client: LlmClient | None = None,
    highlight_config: HighlightConfig | None = None,
    summary_config: SummaryConfig | None = None,
    policy: SelectionPolicy | None = None,
    include_titles: bool = True,
) -> EvidenceRun:
    """Evidence for every user, isolating per-user failures.

    A failing user is recorded in the error ledger and skipped; completed
    users are never lost to one bad record or endpoint hiccup.
    """
    if mode not in ("goml", "llm", "goml_plus_llm"):
        raise ValueError(f"unknown evidence mode {mode!r}")
    if mode in ("goml", "goml_plus_llm") and models is None:
        raise ValueError(f"mode {mode!r} requires trained models")
    if mode in ("llm", "goml_plus_llm") and client is None:
        raise ValueError(f"mode {mode!r} requires an LLM client")
    highlight_config = highlight_config or HighlightConfig()
    summary_config = summary_config or SummaryConfig()

    all_highlights: list[Highlight] = []
    summaries: list[Summary] = []
    errors: list[dict] = []
    for user in corpus.users:
        try:
            if mode == "llm":
                highlights = llm_user_highlights(
                    client, user, highlight_config.keep_duplicates, include_titles
                )
                important: list[str] = []
            else:
                highlights, important = goml_user_evidence(
                    models, user, highlight_config, policy
                )
            summary = user_summary(
                mode, user, important, summary_config, client, include_titles
            )
        except Exception as exc:  # noqa: BLE001 - per-user isolation by design
            logger.error("user %s failed: %s", user.user_id, exc)
            errors.append(
                {"user_id": user.user_id, "error": str(exc), "type": type(exc).__name__}
            )
            continue
        all_highlights.extend(highlights)
        summaries.append(summary)
    return EvidenceRun(highlights=all_highlights, summaries=summaries, errors=errors)


# ---------------------------------------------------------------------------
# Artifact provenance and JSONL output


def config_hash(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True, default=str).encode("utf-8")
    ).hexdigest()[:16]


def run_metadata(config: dict, seed: int) -> dict:
    return {"config_hash": config_hash(config), "seed": seed, "version": __version__}


def write_jsonl(path: str | Path, rows: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")


def write_json(path: str | Path, payload: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
