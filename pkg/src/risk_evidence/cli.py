"""Command-line orchestration: train, evidence, evaluate, analyze, topics.

Configuration precedence is flags > environment > TOML config > defaults.
Exit codes: 0 ok, 1 usage, 2 data error, 3 endpoint error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .analysis import cluster_docs, compare_important_vs_other, ctfidf
from .corpus import Corpus, CorpusFormatError, Span, load_corpus, split_sentences
from .evidence import Highlight, HighlightConfig
from .features import TfidfConfig, load_tfidf, save_tfidf
from .llm_client import LlmClient, LlmError, LlmParams
from .metrics import (
    EndpointError,
    EvaluationReport,
    HashedTrigramEmbedder,
    HttpEmbedder,
    HttpNliClient,
    evaluate_highlights,
    evaluate_summaries,
)
from .model import (
    DegenerateLabelsError,
    SelectionPolicy,
    TrainConfig,
    cross_validate,
    load_baseline,
    load_logreg,
    save_baseline,
    save_logreg,
)
from .pipeline import (
    GomlModels,
    corpus_documents,
    run_evidence,
    run_metadata,
    select_subset,
    train_goml,
    training_fingerprint,
    write_json,
    write_jsonl,
)
from .summarize import SummaryConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ENDPOINT = 3

ENV_LLM_ENDPOINT = "RISK_EVIDENCE_LLM_ENDPOINT"
ENV_EMBEDDER = "RISK_EVIDENCE_EMBEDDER"
ENV_NLI = "RISK_EVIDENCE_NLI"

_DATA_ERRORS = (CorpusFormatError, DegenerateLabelsError, FileNotFoundError,
                ValueError, KeyError, json.JSONDecodeError)
_ENDPOINT_ERRORS = (LlmError, EndpointError)


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on usage errors."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _cfg(config: dict, section: str, key: str, default):
    return config.get(section, {}).get(key, default)


def _pick(flag_value, config: dict, section: str, key: str, default):
    """Flag wins when given; otherwise config value; otherwise default."""
    if flag_value is not None:
        return flag_value
    return _cfg(config, section, key, default)


def _tfidf_config(config: dict) -> TfidfConfig:
    section = config.get("tfidf", {})
    return TfidfConfig(**section) if section else TfidfConfig()


def _train_config(config: dict) -> TrainConfig:
    section = config.get("train", {})
    return TrainConfig(**section) if section else TrainConfig()


def _llm_params(args, config: dict) -> LlmParams:
    endpoint = _pick(
        getattr(args, "llm_endpoint", None), config, "llm", "endpoint",
        os.environ.get(ENV_LLM_ENDPOINT, ""),
    )
    if not endpoint:
        raise ValueError(
            "no LLM endpoint configured (use --llm-endpoint, the [llm] config "
            f"section, or ${ENV_LLM_ENDPOINT})"
        )
    section = dict(config.get("llm", {}))
    section.pop("endpoint", None)
    if getattr(args, "llm_model", None) is not None:
        section["model"] = args.llm_model
    if getattr(args, "n_runs", None) is not None:
        section["n_runs"] = args.n_runs
    return LlmParams(endpoint=endpoint, **section)


def _make_embedder(spec: str):
    if spec == "test":
        return HashedTrigramEmbedder()
    if spec.startswith(("http://", "https://")):
        return HttpEmbedder(spec)
    raise ValueError(f"embedder must be 'test' or an http(s) URL, got {spec!r}")


def _make_nli(spec: str):
    if spec == "none":
        return None
    if spec.startswith(("http://", "https://")):
        return HttpNliClient(spec)
    raise ValueError(f"nli must be 'none' or an http(s) URL, got {spec!r}")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_train(args, config: dict) -> int:
    corpus = load_corpus(args.corpus)
    subset = _pick(args.subset, config, "run", "subset", "test")
    seed = _pick(args.seed, config, "run", "seed", 7)
    include_titles = not args.no_titles
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    selected = select_subset(corpus, subset)
    tfidf_config = _tfidf_config(config)
    train_config = _train_config(config)

    cv = cross_validate(
        selected, folds=args.folds, seed=seed,
        tfidf_config=tfidf_config, train_config=train_config,
        include_titles=include_titles,
    )
    models = train_goml(selected, tfidf_config, train_config, include_titles)
    docs, labels, _ = corpus_documents(selected, include_titles)
    fingerprint = training_fingerprint(docs, labels)

    resolved = {
        "command": "train", "corpus": str(args.corpus), "subset": subset,
        "include_titles": include_titles, "folds": args.folds,
        "tfidf": tfidf_config.__dict__, "train": train_config.__dict__,
    }
    meta = run_metadata(resolved, seed)

    save_tfidf(models.tfidf, out_dir / "tfidf.json")
    save_logreg(models.classifier, out_dir / "classifier.json", fingerprint=fingerprint)
    save_baseline(models.baseline, out_dir / "baseline.json")
    write_json(out_dir / "cv_report.json", {"meta": meta, **cv.to_dict()})
    write_json(out_dir / "run_meta.json", {**meta, "training_fingerprint": fingerprint})

    print(f"trained on {len(selected)} users ({len(docs)} documents), "
          f"{models.tfidf.n_features} features")
    print(f"cv mean: balanced_accuracy={cv.mean.balanced_accuracy:.3f} "
          f"accuracy={cv.mean.accuracy:.3f} f1={cv.mean.f1:.3f}")
    if not models.classifier.converged:
        print("warning: classifier did not reach the gradient tolerance", file=sys.stderr)
    print(f"models written to {out_dir}")
    return EXIT_OK


def _load_models(models_dir: str, include_titles: bool) -> GomlModels:
    directory = Path(models_dir)
    return GomlModels(
        tfidf=load_tfidf(directory / "tfidf.json"),
        classifier=load_logreg(directory / "classifier.json"),
        baseline=load_baseline(directory / "baseline.json"),
        include_titles=include_titles,
    )


def cmd_evidence(args, config: dict) -> int:
    corpus = load_corpus(args.corpus)
    seed = _pick(args.seed, config, "run", "seed", 7)
    include_titles = not args.no_titles
    out_dir = Path(args.output_dir)

    highlight_config = HighlightConfig(
        mode=_pick(args.highlight_mode, config, "highlight", "mode", "sentence"),
        window_words=_pick(args.window_words, config, "highlight", "window_words", 14),
        keep_duplicates=args.keep_duplicates
        or _cfg(config, "highlight", "keep_duplicates", False),
    )
    summary_config = SummaryConfig(
        mode="extractive" if args.mode == "goml" else "abstractive",
        max_words=_pick(args.max_words, config, "summary", "max_words", 300),
        n_sentences=_pick(args.summary_sentences, config, "summary", "n_sentences", 5),
    )
    policy = SelectionPolicy(top_k=_pick(args.top_k, config, "select", "top_k", 10))

    models = None
    if args.mode in ("goml", "goml_plus_llm"):
        if not args.models_dir:
            raise ValueError(f"mode {args.mode!r} requires --models-dir")
        models = _load_models(args.models_dir, include_titles)
    client = None
    if args.mode in ("llm", "goml_plus_llm"):
        client = LlmClient(_llm_params(args, config))

    try:
        run = run_evidence(
            corpus, args.mode, models=models, client=client,
            highlight_config=highlight_config, summary_config=summary_config,
            policy=policy, include_titles=include_titles,
        )
    finally:
        if client is not None:
            client.close()

    resolved = {
        "command": "evidence", "corpus": str(args.corpus), "mode": args.mode,
        "include_titles": include_titles,
        "highlight": highlight_config.__dict__, "summary": summary_config.__dict__,
        "top_k": policy.top_k,
    }
    meta = run_metadata(resolved, seed)
    write_jsonl(out_dir / "highlights.jsonl", [h.to_dict() for h in run.highlights])
    write_jsonl(out_dir / "summaries.jsonl", [s.to_dict() for s in run.summaries])
    write_json(out_dir / "run_meta.json", meta)
    if run.errors:
        write_jsonl(out_dir / "errors.jsonl", run.errors)
        print(f"{len(run.errors)} users failed; see {out_dir / 'errors.jsonl'}",
              file=sys.stderr)
    print(f"wrote {len(run.highlights)} highlights and {len(run.summaries)} "
          f"summaries to {out_dir}")

    if run.errors and not run.summaries:
        # nothing succeeded; surface an endpoint outage as such
        if all(e["type"].startswith(("Llm", "Endpoint")) for e in run.errors):
            raise LlmError("every user failed with endpoint errors")
        return EXIT_DATA
    return EXIT_OK


def _read_highlight_texts(path: str) -> dict[str, list[str]]:
    by_user: dict[str, list[str]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                by_user.setdefault(str(row["user_id"]), []).append(str(row["text"]))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"{path}:{line_no}: bad highlight row ({exc})") from None
    return by_user


def _read_summaries(path: str) -> dict[str, str]:
    by_user: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                by_user[str(row["user_id"])] = str(row["summary"])
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"{path}:{line_no}: bad summary row ({exc})") from None
    return by_user


def cmd_evaluate(args, config: dict) -> int:
    seed = _pick(args.seed, config, "run", "seed", 7)
    embedder_spec = args.embedder or os.environ.get(ENV_EMBEDDER) \
        or _cfg(config, "eval", "embedder", "test")
    nli_spec = args.nli or os.environ.get(ENV_NLI) or _cfg(config, "eval", "nli", "none")
    embedder = _make_embedder(embedder_spec)
    nli = _make_nli(nli_spec)

    gold = _read_highlight_texts(args.gold_highlights)
    pred = _read_highlight_texts(args.pred_highlights)
    missing = sorted(set(pred) - set(gold))
    if missing:
        raise ValueError(f"prediction users absent from gold: {missing}")
    per_user_h, aggregate_h = evaluate_highlights(gold, pred, embedder)

    per_user_s: dict = {}
    aggregate_s = None
    if args.gold_summaries and args.pred_summaries:
        if nli is None:
            raise ValueError("summary evaluation needs --nli pointing at an endpoint")
        gold_sents = {
            user: [s.span.text for s in split_sentences(text)]
            for user, text in _read_summaries(args.gold_summaries).items()
        }
        pred_summaries = _read_summaries(args.pred_summaries)
        per_user_s, aggregate_s = evaluate_summaries(gold_sents, pred_summaries, nli)

    report = EvaluationReport(
        per_user_highlights=per_user_h,
        aggregate_highlights=aggregate_h,
        per_user_summaries=per_user_s,
        aggregate_summaries=aggregate_s,
    )
    resolved = {
        "command": "evaluate", "gold_highlights": args.gold_highlights,
        "pred_highlights": args.pred_highlights, "embedder": embedder_spec,
        "nli": nli_spec,
    }
    meta = run_metadata(resolved, seed)
    payload = {"meta": {**meta, "config": resolved}, **report.to_dict()}
    write_json(args.output, payload)
    print(f"highlights aggregate: recall={aggregate_h.recall:.3f} "
          f"precision={aggregate_h.precision:.3f} "
          f"weighted_recall={aggregate_h.weighted_recall:.3f} "
          f"harmonic={aggregate_h.harmonic:.3f}")
    if aggregate_s is not None:
        print(f"summaries aggregate: consistency={aggregate_s.consistency:.3f} "
              f"contradiction={aggregate_s.contradiction:.3f}")
    print(f"report written to {args.output}")
    return EXIT_OK


def _read_highlight_spans(path: str, corpus: Corpus, include_titles: bool) -> list[Highlight]:
    doc_by_post = {
        post.post_id: (user.user_id, post.document(include_titles))
        for user in corpus.users for post in user.posts
    }
    highlights: list[Highlight] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            row = json.loads(line)
            post_id = str(row["post_id"])
            if post_id not in doc_by_post:
                raise ValueError(f"{path}:{line_no}: unknown post_id {post_id!r}")
            user_id, doc = doc_by_post[post_id]
            start, end = int(row["start"]), int(row["end"])
            if doc[start:end] != row["text"]:
                raise ValueError(
                    f"{path}:{line_no}: span text does not match the corpus at "
                    f"[{start}, {end}) (was the title setting different?)"
                )
            highlights.append(
                Highlight(
                    post_id=post_id, user_id=user_id,
                    span=Span(start, end, row["text"]),
                    source=row.get("source", "goml"),
                )
            )
    return highlights


def cmd_analyze(args, config: dict) -> int:
    seed = _pick(args.seed, config, "run", "seed", 0)
    include_titles = not args.no_titles
    corpus = load_corpus(args.corpus)
    highlights = _read_highlight_spans(args.highlights, corpus, include_titles)
    report = compare_important_vs_other(
        corpus, highlights, n_permutations=args.permutations, seed=seed,
        include_titles=include_titles,
    )
    report.to_csv(args.output)
    for row in report.rows:
        marker = "*" if row.p_value < 0.05 else " "
        print(f"{row.name:>8}{marker} important={row.mean_important:.4f} "
              f"other={row.mean_other:.4f} diff={row.diff:+.4f} p={row.p_value:.4f}")
    print(f"({report.n_important} important vs {report.n_other} other sentences; "
          f"{report.n_permutations} permutations)")
    print(f"analysis written to {args.output}")
    return EXIT_OK


def cmd_topics(args, config: dict) -> int:
    seed = _pick(args.seed, config, "run", "seed", 0)
    include_titles = not args.no_titles
    corpus = load_corpus(args.corpus)
    embedder_spec = args.embedder or os.environ.get(ENV_EMBEDDER) \
        or _cfg(config, "eval", "embedder", "test")
    embedder = _make_embedder(embedder_spec)

    docs = [post.document(include_titles) for post in corpus.posts()]
    if len(docs) < args.clusters:
        raise ValueError(f"only {len(docs)} documents for {args.clusters} clusters")
    vectors = [embedder.embed(doc) for doc in docs]
    assignment = cluster_docs(vectors, k=args.clusters, seed=seed)
    grouped: list[list[str]] = [[] for _ in range(args.clusters)]
    for doc, cluster in zip(docs, assignment):
        grouped[int(cluster)].append(doc)
    keywords = ctfidf(grouped, top_k=args.top_k)

    resolved = {
        "command": "topics", "corpus": str(args.corpus), "clusters": args.clusters,
        "top_k": args.top_k, "embedder": embedder_spec,
    }
    payload = {
        "meta": run_metadata(resolved, seed),
        "clusters": [
            {
                "cluster_id": c,
                "size": len(grouped[c]),
                "keywords": [{"term": t, "score": round(s, 6)} for t, s in keywords[c]],
            }
            for c in range(args.clusters)
        ],
    }
    write_json(args.output, payload)
    for c in range(args.clusters):
        terms = ", ".join(t for t, _ in keywords[c][:5])
        print(f"cluster {c} ({len(grouped[c])} docs): {terms}")
    print(f"topics written to {args.output}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser assembly


def build_parser() -> _Parser:
    parser = _Parser(prog="risk-evidence",
                     description="Evidence extraction and evaluation pipelines.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("train", parents=[common],
                       help="fit vectorizer + classifier, write models and CV report")
    p.add_argument("--corpus", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--subset", choices=["test", "taskA", "a_plus_e"], default=None)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--no-titles", action="store_true",
                   help="exclude post titles from documents")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evidence", parents=[common],
                       help="emit highlights and summaries for a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--mode", required=True, choices=["goml", "llm", "goml_plus_llm"])
    p.add_argument("--output-dir", required=True)
    p.add_argument("--models-dir", help="directory with train outputs (goml modes)")
    p.add_argument("--highlight-mode", choices=["window", "sentence"], default=None)
    p.add_argument("--window-words", type=int, default=None)
    p.add_argument("--keep-duplicates", action="store_true",
                   help="skip duplicate/substring removal")
    p.add_argument("--top-k", type=int, default=None,
                   help="important features per post")
    p.add_argument("--summary-sentences", type=int, default=None)
    p.add_argument("--max-words", type=int, default=None)
    p.add_argument("--llm-endpoint", default=None)
    p.add_argument("--llm-model", default=None)
    p.add_argument("--n-runs", type=int, default=None,
                   help="completion runs per post (llm mode)")
    p.add_argument("--no-titles", action="store_true")
    p.set_defaults(func=cmd_evidence)

    p = sub.add_parser("evaluate", parents=[common],
                       help="score predicted highlights/summaries against gold")
    p.add_argument("--gold-highlights", required=True)
    p.add_argument("--pred-highlights", required=True)
    p.add_argument("--gold-summaries")
    p.add_argument("--pred-summaries")
    p.add_argument("--embedder", default=None, help="'test' or an embedding endpoint URL")
    p.add_argument("--nli", default=None, help="'none' or an NLI endpoint URL")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze", parents=[common],
                       help="compare highlighted vs other sentences (PoS, length)")
    p.add_argument("--corpus", required=True)
    p.add_argument("--highlights", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--permutations", type=int, default=10_000)
    p.add_argument("--no-titles", action="store_true")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("topics", parents=[common],
                       help="cluster documents and extract topic keywords")
    p.add_argument("--corpus", required=True)
    p.add_argument("--clusters", type=int, required=True)
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--embedder", default=None)
    p.add_argument("--no-titles", action="store_true")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_topics)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = _load_config(getattr(args, "config", None))
        return args.func(args, config)
    except _ENDPOINT_ERRORS as exc:
        print(f"endpoint error: {exc}", file=sys.stderr)
        return EXIT_ENDPOINT
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
