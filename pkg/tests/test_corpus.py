"""Corpus loading, tokenization and sentence segmentation."""

from __future__ import annotations

import json
import logging

import pytest
from hypothesis import given, strategies as st

from risk_evidence.corpus import (
    Corpus,
    CorpusFormatError,
    Post,
    RiskLabel,
    Span,
    UserRecord,
    load_corpus,
    map_risk_to_binary,
    split_sentences,
    word_tokenize,
)

from .oracles import walker_tokenize


def write_jsonl_corpus(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")


def user_record(user_id="u1", label="a", body="I am fine."):
    return {
        "user_id": user_id,
        "label": label,
        "posts": [{"post_id": f"{user_id}_p0", "title": "", "body": body}],
    }


class TestLoadCorpus:
    def test_two_line_jsonl(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl_corpus(path, [user_record("u1", "a"), user_record("u2", "c")])
        corpus = load_corpus(path)
        assert len(corpus) == 2
        assert corpus.users[0].label is RiskLabel.A
        assert corpus.users[1].label is RiskLabel.C

    def test_unknown_label_names_line_and_value(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl_corpus(path, [user_record("u1", "a"), user_record("u2", "e")])
        with pytest.raises(CorpusFormatError, match=r"c\.jsonl:2.*'e'"):
            load_corpus(path)

    def test_empty_file_warns(self, tmp_path, caplog):
        path = tmp_path / "c.jsonl"
        path.write_text("")
        with caplog.at_level(logging.WARNING):
            corpus = load_corpus(path)
        assert len(corpus) == 0
        assert any("no records" in message for message in caplog.messages)

    def test_duplicate_post_id(self, tmp_path):
        record = user_record("u1")
        other = user_record("u2")
        other["posts"][0]["post_id"] = "u1_p0"
        path = tmp_path / "c.jsonl"
        write_jsonl_corpus(path, [record, other])
        with pytest.raises(CorpusFormatError, match="duplicate post_id"):
            load_corpus(path)

    def test_malformed_json_reports_line(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps(user_record()) + "\n{oops\n")
        with pytest.raises(CorpusFormatError, match=r"c\.jsonl:2"):
            load_corpus(path)

    def test_missing_field(self, tmp_path):
        record = user_record()
        del record["label"]
        path = tmp_path / "c.jsonl"
        write_jsonl_corpus(path, [record])
        with pytest.raises(CorpusFormatError, match="label"):
            load_corpus(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_corpus(tmp_path / "absent.jsonl")

    def test_csv_round_trip(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text(
            "user_id,label,post_id,title,body\n"
            "u1,a,p1,Hello,I am fine.\n"
            "u1,a,p2,,Still fine.\n"
            "u2,d,p3,,I am not.\n"
        )
        corpus = load_corpus(path)
        assert len(corpus) == 2
        assert [p.post_id for p in corpus.users[0].posts] == ["p1", "p2"]
        assert corpus.users[1].label is RiskLabel.D

    def test_csv_conflicting_labels(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text(
            "user_id,label,post_id,title,body\n"
            "u1,a,p1,,x\n"
            "u1,b,p2,,y\n"
        )
        with pytest.raises(CorpusFormatError, match=r"c\.csv:3.*conflicting"):
            load_corpus(path)

    def test_subset_field_captured(self, tmp_path):
        record = user_record("u1")
        record["subset"] = "expert"
        path = tmp_path / "c.jsonl"
        write_jsonl_corpus(path, [record])
        assert load_corpus(path).subsets == {"u1": "expert"}


class TestRiskLabels:
    def test_binarization(self):
        assert map_risk_to_binary(RiskLabel.A) == -1
        assert map_risk_to_binary(RiskLabel.B) == 1
        assert map_risk_to_binary(RiskLabel.C) == 1
        assert map_risk_to_binary(RiskLabel.D) == 1

    def test_severity_ordering(self):
        assert RiskLabel.A < RiskLabel.B < RiskLabel.C < RiskLabel.D


class TestWordTokenize:
    def test_drops_numbers_and_punctuation(self):
        tokens = word_tokenize("I feel hopeless, 100%")
        assert [t.text for t in tokens] == ["I", "feel", "hopeless"]

    def test_apostrophe_is_boundary(self):
        assert [t.text for t in word_tokenize("can't")] == ["can", "t"]

    def test_empty(self):
        assert word_tokenize("") == []

    def test_spans_are_verbatim(self):
        text = "Señor Núñez won't quit, 42% sure!"
        for token in word_tokenize(text):
            assert text[token.start : token.end] == token.text

    def test_deterministic_and_position_stable(self):
        text = "same text, re-tokenized twice"
        assert word_tokenize(text) == word_tokenize(text)

    def test_no_digits_in_tokens(self):
        for token in word_tokenize("abc123def 99x x99 under_score ok"):
            assert not any(ch.isdigit() for ch in token.text)

    @pytest.mark.parametrize(
        "text",
        [
            "I feel hopeless, 100%",
            "can't stop won't stop",
            "abc123def trailing",
            "foo_bar _lead trail_ mix3d",
            "café naïve coöperate",
            "emoji 😞 inside",
            "line\nbreaks\tand\ttabs",
            "ｆｕｌｌｗｉｄｔｈ ４２",
            "café combining",
            "multi  space   runs",
            "'quoted' \"spans\" (parens)",
            "",
        ],
    )
    def test_matches_independent_walker(self, text):
        got = [(t.start, t.end, t.text) for t in word_tokenize(text)]
        assert got == walker_tokenize(text)

    @given(
        st.text(
            alphabet="abc ABZ éü.,!?'\"-_0123456789\n\t",
            max_size=60,
        )
    )
    def test_walker_agreement_generated(self, text):
        got = [(t.start, t.end, t.text) for t in word_tokenize(text)]
        assert got == walker_tokenize(text)


class TestSplitSentences:
    def test_two_sentences(self):
        sentences = split_sentences("I am tired. I want out.")
        assert [s.span.text for s in sentences] == ["I am tired.", "I want out."]
        assert [s.index for s in sentences] == [0, 1]

    def test_clustered_terminators(self):
        sentences = split_sentences("Why?!")
        assert [s.span.text for s in sentences] == ["Why?!"]

    def test_no_terminator_single_sentence(self):
        text = "no terminator at all"
        sentences = split_sentences(text)
        assert len(sentences) == 1
        assert sentences[0].span.text == text

    def test_abbreviation_not_split(self):
        sentences = split_sentences("Dr. Smith helped me. I am grateful.")
        assert [s.span.text for s in sentences] == [
            "Dr. Smith helped me.",
            "I am grateful.",
        ]

    def test_blank_line_splits(self):
        sentences = split_sentences("A title\n\nThen a body sentence.")
        assert [s.span.text for s in sentences] == ["A title", "Then a body sentence."]

    def test_decimal_not_split(self):
        assert len(split_sentences("It got 3.5x worse today")) == 1

    @given(st.text(alphabet="ab .!?\n", max_size=80))
    def test_cover_and_order_invariants(self, text):
        sentences = split_sentences(text)
        covered = set()
        previous_end = -1
        for sentence in sentences:
            span = sentence.span
            assert text[span.start : span.end] == span.text
            assert span.start > previous_end
            previous_end = span.end - 1
            covered.update(range(span.start, span.end))
        for i, ch in enumerate(text):
            if not ch.isspace():
                assert i in covered


class TestDataModel:
    def test_span_round_trip(self):
        text = "hello world"
        span = Span.of(text, 6, 11)
        assert span.text == "world"

    def test_span_validation(self):
        with pytest.raises(ValueError):
            Span(3, 3, "")
        with pytest.raises(ValueError):
            Span(0, 5, "ab")

    def test_user_needs_posts(self):
        with pytest.raises(ValueError, match="no posts"):
            UserRecord(user_id="u", label=RiskLabel.A, posts=())

    def test_post_user_id_must_match(self):
        post = Post(post_id="p", user_id="other", title="", body="x")
        with pytest.raises(ValueError, match="carries user"):
            UserRecord(user_id="u", label=RiskLabel.A, posts=(post,))

    def test_document_title_prepended(self):
        post = Post(post_id="p", user_id="u", title="Header", body="Body text.")
        assert post.document() == "Header\n\nBody text."
        assert post.document(include_title=False) == "Body text."
        untitled = Post(post_id="q", user_id="u", title="", body="Body.")
        assert untitled.document() == "Body."

    def test_corpus_duplicate_post_ids_rejected(self):
        p1 = Post(post_id="p", user_id="u1", title="", body="x")
        p2 = Post(post_id="p", user_id="u2", title="", body="y")
        u1 = UserRecord(user_id="u1", label=RiskLabel.A, posts=(p1,))
        u2 = UserRecord(user_id="u2", label=RiskLabel.B, posts=(p2,))
        with pytest.raises(CorpusFormatError):
            Corpus(users=(u1, u2))
