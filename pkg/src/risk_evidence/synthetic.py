"""Deterministic synthetic corpora for tests, benchmarks and demos.

The real shared-task data is access-restricted, so tests and examples run on
generated users whose posts carry class-specific phrases: at-risk users mix
distress phrases into their posts, no-risk users mix calm ones, and both
classes share a common activity pool. That makes the corpora separable by
word bigrams in both directions, which is exactly what the training and
highlight pipelines need to demonstrate behavior.
"""

from __future__ import annotations

import argparse
import json
import random
from pathlib import Path

from .corpus import Corpus, Post, RiskLabel, UserRecord

RISK_PHRASES = [
    "give up completely",
    "no way out",
    "want to disappear",
    "cannot sleep anymore",
    "feel so hopeless",
    "end it all",
    "nothing matters now",
    "tired of living",
    "dark thoughts return",
    "hurt myself again",
]

CALM_PHRASES = [
    "morning coffee ritual",
    "nice weather today",
    "watched a movie",
    "long team meeting",
    "planted new flowers",
    "weekend bike ride",
    "finished a good book",
    "cooked pasta tonight",
    "band practice went well",
    "walked the dog",
]

SHARED_PHRASES = [
    "checked the mail",
    "rode the bus",
    "answered some email",
    "cleaned the kitchen",
    "called my brother",
    "listened to a podcast",
]

_OPENERS = ["Honestly", "Today", "Lately", "Some days", "This week", "Again"]
_FILLERS = [
    "and it keeps repeating",
    "more than before",
    "like always",
    "without any warning",
    "even at work",
    "since last month",
]


def _sentence(rng: random.Random, phrase: str) -> str:
    opener = rng.choice(_OPENERS)
    filler = rng.choice(_FILLERS)
    return f"{opener} I {phrase} {filler}."


def make_synthetic_corpus(
    n_users: int = 125,
    seed: int = 7,
    posts_per_user: tuple[int, int] = (1, 3),
    sentences_per_post: tuple[int, int] = (2, 5),
    with_subsets: bool = False,
) -> Corpus:
    """Build a labeled corpus; the same (args, seed) always yields the same data.

    Labels cycle a, b, c, d. Per post, roughly half the sentences carry a
    class marker (distress phrases for b/c/d users, calm phrases for a
    users) and the rest come from the shared pool.
    """
    rng = random.Random(seed)
    labels = [RiskLabel.A, RiskLabel.B, RiskLabel.C, RiskLabel.D]
    subset_cycle = ["taskA_test", "taskA_train", "expert"]
    users = []
    subsets: dict[str, str] = {}
    for u in range(n_users):
        user_id = f"user{u:04d}"
        label = labels[u % len(labels)]
        marker_pool = CALM_PHRASES if label is RiskLabel.A else RISK_PHRASES
        posts = []
        for p in range(rng.randint(*posts_per_user)):
            n_sentences = rng.randint(*sentences_per_post)
            marker_slots = set(
                rng.sample(range(n_sentences), k=max(1, n_sentences // 2))
            )
            sentences = []
            for s in range(n_sentences):
                pool = marker_pool if s in marker_slots else SHARED_PHRASES
                sentences.append(_sentence(rng, rng.choice(pool)))
            title = f"Entry {p + 1}" if rng.random() < 0.5 else ""
            posts.append(
                Post(
                    post_id=f"{user_id}_p{p}",
                    user_id=user_id,
                    title=title,
                    body=" ".join(sentences),
                )
            )
        users.append(UserRecord(user_id=user_id, label=label, posts=tuple(posts)))
        if with_subsets:
            subsets[user_id] = subset_cycle[u % len(subset_cycle)]
    return Corpus(users=tuple(users), subsets=subsets)


def corpus_to_jsonl(corpus: Corpus, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for user in corpus.users:
            record = {
                "user_id": user.user_id,
                "label": user.label.value,
                "posts": [
                    {"post_id": p.post_id, "title": p.title, "body": p.body}
                    for p in user.posts
                ],
            }
            if user.user_id in corpus.subsets:
                record["subset"] = corpus.subsets[user.user_id]
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Write a synthetic corpus as JSONL.")
    parser.add_argument("output", help="output .jsonl path")
    parser.add_argument("--users", type=int, default=125)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--subsets", action="store_true",
                        help="tag users with cycling subset labels")
    args = parser.parse_args(argv)
    corpus = make_synthetic_corpus(
        n_users=args.users, seed=args.seed, with_subsets=args.subsets
    )
    corpus_to_jsonl(corpus, args.output)
    print(f"wrote {len(corpus)} users to {args.output}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
