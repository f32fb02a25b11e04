"""Corpus data model: users, posts, spans, tokenization and sentence segmentation.

Everything downstream (features, highlights, summaries, metrics) operates on
the character-indexed spans produced here. Offsets are Unicode scalar
positions into the post's document text, never bytes.
"""

from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

logger = logging.getLogger(__name__)

# Word tokens: word characters that are not digits, bounded by \b.
# Apostrophes and punctuation split tokens; pure numbers never match.
TOKEN_PATTERN = re.compile(r"\b[^\d\W]+\b")

# Terminators that may end a sentence. Blank lines also end sentences.
_SENT_TERMINATOR = re.compile(r"[.!?]+")
_BLANK_LINE = re.compile(r"\n\s*\n")

DEFAULT_ABBREVIATIONS = frozenset(
    {"mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc",
     "e.g", "i.e", "approx", "fig"}
)


class CorpusFormatError(ValueError):
    """Malformed corpus input; message carries line number and offending value."""


class RiskLabel(str, Enum):
    """Four-level risk annotation, ordered a < b < c < d by severity."""

    A = "a"
    B = "b"
    C = "c"
    D = "d"

    @property
    def severity(self) -> int:
        return "abcd".index(self.value)

    def __lt__(self, other: object) -> bool:
        if not isinstance(other, RiskLabel):
            return NotImplemented
        return self.severity < other.severity


def map_risk_to_binary(label: RiskLabel) -> int:
    """Binarize a risk label: 'a' (no risk) -> -1, 'b'/'c'/'d' -> +1."""
    return -1 if label is RiskLabel.A else 1


@dataclass(frozen=True)
class Span:
    """A verbatim substring of a source text.

    ``start`` is inclusive and ``end`` exclusive; ``text`` must equal
    ``source[start:end]`` exactly.
    """

    start: int
    end: int
    text: str

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.end):
            raise ValueError(f"invalid span bounds [{self.start}, {self.end})")
        if len(self.text) != self.end - self.start:
            raise ValueError(
                f"span text length {len(self.text)} does not match bounds "
                f"[{self.start}, {self.end})"
            )

    @classmethod
    def of(cls, source: str, start: int, end: int) -> "Span":
        return cls(start, end, source[start:end])


# Token spans are plain spans; the token's text is the matched word.
TokenSpan = Span


@dataclass(frozen=True)
class Sentence:
    """A sentence span plus its ordinal within the document."""

    span: Span
    index: int


@dataclass(frozen=True)
class Post:
    post_id: str
    user_id: str
    title: str
    body: str

    def document(self, include_title: bool = True) -> str:
        """The post's text basis for vectorization and highlighting.

        When the title is present and requested, it is prepended to the body
        separated by a blank line, so it segments as its own sentence.
        """
        if include_title and self.title:
            return f"{self.title}\n\n{self.body}"
        return self.body


@dataclass(frozen=True)
class UserRecord:
    user_id: str
    label: RiskLabel
    posts: tuple[Post, ...]

    def __post_init__(self) -> None:
        if not self.posts:
            raise ValueError(f"user {self.user_id!r} has no posts")
        for post in self.posts:
            if post.user_id != self.user_id:
                raise ValueError(
                    f"post {post.post_id!r} carries user {post.user_id!r}, "
                    f"expected {self.user_id!r}"
                )


@dataclass(frozen=True)
class Corpus:
    users: tuple[UserRecord, ...]
    subsets: dict[str, str] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for user in self.users:
            for post in user.posts:
                if post.post_id in seen:
                    raise CorpusFormatError(f"duplicate post_id {post.post_id!r}")
                seen.add(post.post_id)

    def __len__(self) -> int:
        return len(self.users)

    def posts(self) -> list[Post]:
        return [post for user in self.users for post in user.posts]

    def get_user(self, user_id: str) -> UserRecord:
        for user in self.users:
            if user.user_id == user_id:
                return user
        raise KeyError(user_id)


def word_tokenize(text: str) -> list[TokenSpan]:
    """Tokenize into word spans using the word-boundary regex.

    Tokens are runs of non-digit word characters; each carries its character
    offsets into ``text``. Case is preserved (lowercasing happens in the
    feature pipeline, not here).
    """
    return [Span(m.start(), m.end(), m.group()) for m in TOKEN_PATTERN.finditer(text)]


def _abbreviation_before(text: str, dot_index: int, abbreviations: frozenset[str]) -> bool:
    """True if the non-whitespace run ending at ``dot_index`` is a known abbreviation."""
    i = dot_index
    while i > 0 and not text[i - 1].isspace():
        i -= 1
    word = text[i:dot_index].strip(".,;:!?()[]\"'").lower()
    return word in abbreviations


def _trimmed_span(text: str, start: int, end: int) -> Span | None:
    while start < end and text[start].isspace():
        start += 1
    while end > start and text[end - 1].isspace():
        end -= 1
    if end <= start:
        return None
    return Span.of(text, start, end)


def split_sentences(
    text: str,
    abbreviations: frozenset[str] = DEFAULT_ABBREVIATIONS,
) -> list[Sentence]:
    """Rule-based sentence segmentation with verbatim spans.

    Splits on runs of ``.``, ``!``, ``?`` followed by whitespace (skipping a
    configurable abbreviation list for ``.``), and on blank lines. Text with
    no terminator yields a single sentence. Sentences are non-overlapping,
    ordered, and cover all non-whitespace text.
    """
    spans: list[Span] = []

    block_start = 0
    blocks: list[tuple[int, int]] = []
    for sep in _BLANK_LINE.finditer(text):
        blocks.append((block_start, sep.start()))
        block_start = sep.end()
    blocks.append((block_start, len(text)))

    for b_start, b_end in blocks:
        sent_start = b_start
        for m in _SENT_TERMINATOR.finditer(text, b_start, b_end):
            if m.end() < b_end and not text[m.end()].isspace():
                continue  # terminator glued to following text, e.g. "3.5x"
            if m.group().endswith(".") and _abbreviation_before(text, m.start(), abbreviations):
                if "!" not in m.group() and "?" not in m.group():
                    continue
            span = _trimmed_span(text, sent_start, m.end())
            if span is not None:
                spans.append(span)
            sent_start = m.end()
        tail = _trimmed_span(text, sent_start, b_end)
        if tail is not None:
            spans.append(tail)

    return [Sentence(span=s, index=i) for i, s in enumerate(spans)]


def enclosing_sentence(sentences: list[Sentence], position: int) -> Sentence | None:
    """The sentence whose span contains character ``position``, if any."""
    for sentence in sentences:
        if sentence.span.start <= position < sentence.span.end:
            return sentence
    return None


def _parse_label(raw: object, where: str) -> RiskLabel:
    try:
        return RiskLabel(str(raw))
    except ValueError:
        raise CorpusFormatError(
            f"{where}: unknown label {raw!r} (expected one of a, b, c, d)"
        ) from None


def _load_jsonl(path: Path) -> tuple[list[UserRecord], dict[str, str]]:
    users: list[UserRecord] = []
    subsets: dict[str, str] = {}
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path.name}:{line_no}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{where}: invalid JSON ({exc.msg})") from None
            try:
                user_id = str(record["user_id"])
                label = _parse_label(record["label"], where)
                raw_posts = record["posts"]
            except KeyError as exc:
                raise CorpusFormatError(f"{where}: missing field {exc.args[0]!r}") from None
            if not isinstance(raw_posts, list) or not raw_posts:
                raise CorpusFormatError(f"{where}: 'posts' must be a non-empty list")
            posts = []
            for p in raw_posts:
                try:
                    posts.append(
                        Post(
                            post_id=str(p["post_id"]),
                            user_id=user_id,
                            title=str(p.get("title", "") or ""),
                            body=str(p["body"]),
                        )
                    )
                except KeyError as exc:
                    raise CorpusFormatError(
                        f"{where}: post missing field {exc.args[0]!r}"
                    ) from None
            users.append(UserRecord(user_id=user_id, label=label, posts=tuple(posts)))
            if "subset" in record:
                subsets[user_id] = str(record["subset"])
    return users, subsets


_CSV_COLUMNS = ("user_id", "label", "post_id", "title", "body")


def _load_csv(path: Path) -> tuple[list[UserRecord], dict[str, str]]:
    order: list[str] = []
    labels: dict[str, RiskLabel] = {}
    posts_by_user: dict[str, list[Post]] = {}
    subsets: dict[str, str] = {}
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is not None:
            missing = [c for c in _CSV_COLUMNS if c not in reader.fieldnames]
            if missing:
                raise CorpusFormatError(f"{path.name}: missing columns {missing}")
        for row_no, row in enumerate(reader, start=2):  # header is line 1
            where = f"{path.name}:{row_no}"
            if any(row.get(c) is None for c in ("user_id", "label", "post_id", "body")):
                raise CorpusFormatError(f"{where}: incomplete row")
            user_id = row["user_id"]
            label = _parse_label(row["label"], where)
            if user_id in labels and labels[user_id] is not label:
                raise CorpusFormatError(
                    f"{where}: conflicting label {label.value!r} for user "
                    f"{user_id!r} (earlier rows say {labels[user_id].value!r})"
                )
            if user_id not in labels:
                labels[user_id] = label
                posts_by_user[user_id] = []
                order.append(user_id)
            posts_by_user[user_id].append(
                Post(
                    post_id=row["post_id"],
                    user_id=user_id,
                    title=row.get("title") or "",
                    body=row["body"],
                )
            )
            if row.get("subset"):
                subsets[user_id] = row["subset"]
    users = [
        UserRecord(user_id=uid, label=labels[uid], posts=tuple(posts_by_user[uid]))
        for uid in order
    ]
    return users, subsets


def load_corpus(path: str | Path, format: str | None = None) -> Corpus:
    """Load a corpus from JSONL (one user per line) or CSV (one post per row).

    The format is inferred from the file extension unless given explicitly.
    Raises :class:`CorpusFormatError` naming the offending line for malformed
    records, unknown labels, or duplicate post ids. An empty file yields an
    empty corpus with a warning.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    fmt = format or ("csv" if path.suffix.lower() == ".csv" else "jsonl")
    if fmt == "jsonl":
        users, subsets = _load_jsonl(path)
    elif fmt == "csv":
        users, subsets = _load_csv(path)
    else:
        raise ValueError(f"unsupported corpus format {fmt!r}")
    if not users:
        logger.warning("corpus file %s contains no records", path)
    return Corpus(users=tuple(users), subsets=subsets)
