"""tf-idf fitting and transformation against hand-derived values."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from risk_evidence.features import (
    EmptyVocabularyError,
    TfidfConfig,
    extract_ngrams,
    fit_tfidf,
    load_tfidf,
    normalize_token,
    save_tfidf,
    to_csr,
    transform,
    transform_many,
)

UNIGRAMS = TfidfConfig(ngram_min=1, ngram_max=1)


class TestExtractNgrams:
    def test_full_enumeration(self):
        grams = extract_ngrams(["i", "want", "to", "die"], 2, 4)
        assert grams == [
            "i want", "want to", "to die",
            "i want to", "want to die",
            "i want to die",
        ]

    def test_too_short(self):
        assert extract_ngrams(["lonely"], 2, 4) == []

    def test_exact_n(self):
        assert extract_ngrams(["a", "b", "c"], 3, 3) == ["a b c"]


class TestNormalize:
    def test_lowercase_and_accents(self):
        assert normalize_token("Café") == "cafe"
        assert normalize_token("NAÏVE") == "naive"

    def test_accent_stripping_optional(self):
        assert normalize_token("Café", strip_accents=False) == "café"


class TestFit:
    def test_smooth_idf_rare_term(self):
        docs = ["rare word here", "common only", "common again"]
        model = fit_tfidf(docs, UNIGRAMS)
        idx = model.vocabulary["rare"]
        assert model.idf[idx] == pytest.approx(math.log(4 / 2) + 1, abs=1e-12)
        assert model.idf[idx] == pytest.approx(1.6931, abs=1e-4)

    def test_idf_term_in_all_docs(self):
        docs = ["common a", "common b", "common c"]
        model = fit_tfidf(docs, UNIGRAMS)
        assert model.idf[model.vocabulary["common"]] == pytest.approx(1.0, abs=1e-12)

    def test_min_df_one_keeps_singletons(self):
        model = fit_tfidf(["solo term", "other words"], UNIGRAMS)
        assert "solo" in model.vocabulary

    def test_empty_vocabulary_error(self):
        with pytest.raises(EmptyVocabularyError, match="empty vocabulary"):
            fit_tfidf(["", "12 34", "!!!"], UNIGRAMS)

    def test_no_docs_error(self):
        with pytest.raises(ValueError):
            fit_tfidf([])

    def test_vocabulary_is_lexicographic(self):
        model = fit_tfidf(["zeta alpha mid", "alpha mid"], UNIGRAMS)
        names = list(model.feature_names)
        assert names == sorted(names)
        assert [model.vocabulary[n] for n in names] == list(range(len(names)))

    def test_max_features_keeps_most_frequent(self):
        docs = ["hot hot hot cold", "hot warm", "hot cold"]
        model = fit_tfidf(docs, TfidfConfig(ngram_min=1, ngram_max=1, max_features=2))
        assert set(model.feature_names) == {"hot", "cold"}

    def test_min_df_filters(self):
        docs = ["a b", "a c", "a d"]
        model = fit_tfidf(docs, TfidfConfig(ngram_min=1, ngram_max=1, min_df=2))
        assert set(model.feature_names) == {"a"}

    def test_default_range_is_2_to_4(self):
        config = TfidfConfig()
        assert (config.ngram_min, config.ngram_max) == (2, 4)
        assert config.min_df == 1 and config.max_features is None
        assert config.smooth_idf and config.sublinear_tf and config.norm == "l2"


class TestTransform:
    def test_single_entry_normalizes_to_one(self):
        model = fit_tfidf(["alpha beta", "gamma delta"], TfidfConfig(ngram_min=2, ngram_max=2))
        vec = transform(model, "alpha beta")
        assert vec.nnz == 1
        assert vec.values[0] == pytest.approx(1.0, abs=1e-12)

    def test_tf_one_pre_norm_equals_idf(self):
        config = TfidfConfig(ngram_min=1, ngram_max=1, norm="none")
        model = fit_tfidf(["rare word here", "word again", "word more"], config)
        vec = transform(model, "rare")
        assert vec.values[0] == pytest.approx(model.idf[model.vocabulary["rare"]], abs=1e-12)

    def test_hand_derived_two_feature_document(self):
        # 'common' in all 3 docs: idf 1.0; 'rare' in one: idf ln(4/2)+1
        docs = ["common common rare", "common", "common"]
        model = fit_tfidf(docs, UNIGRAMS)
        vec = transform(model, docs[0])
        # tf=(2,1) -> pre-norm ((1+ln 2)*1.0, 1*(ln 2 + 1)): equal weights
        expected = math.sqrt(0.5)
        assert vec.values == pytest.approx([expected, expected], abs=1e-9)

    def test_out_of_vocabulary_ignored(self):
        model = fit_tfidf(["known words"], TfidfConfig(ngram_min=1, ngram_max=1))
        vec = transform(model, "unseen things entirely")
        assert vec.nnz == 0
        assert vec.norm() == 0.0

    def test_depends_only_on_ngram_multiset(self):
        model = fit_tfidf(["a b c d"], UNIGRAMS)
        one = transform(model, "a, b! c; d")
        two = transform(model, "d c b a")
        assert np.array_equal(one.indices, two.indices)
        assert one.values == pytest.approx(list(two.values), abs=1e-12)

    @given(st.lists(st.sampled_from("abcdef"), min_size=0, max_size=30))
    def test_norm_is_zero_or_one(self, letters):
        model = fit_tfidf(["a b c", "d e f", "a d"], UNIGRAMS)
        vec = transform(model, " ".join(letters))
        assert vec.norm() == pytest.approx(0.0, abs=1e-12) or vec.norm() == pytest.approx(
            1.0, abs=1e-9
        )

    def test_fitting_more_docs_never_drops_vocabulary(self):
        base_docs = ["alpha beta", "gamma delta epsilon"]
        base = fit_tfidf(base_docs, UNIGRAMS)
        grown = fit_tfidf(base_docs + ["zeta eta"], UNIGRAMS)
        assert set(base.vocabulary) <= set(grown.vocabulary)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        model = fit_tfidf(["i want to die", "i want to live"], TfidfConfig())
        path = tmp_path / "tfidf.json"
        save_tfidf(model, path)
        loaded = load_tfidf(path)
        assert loaded.vocabulary == model.vocabulary
        assert loaded.n_docs == model.n_docs
        assert loaded.idf == pytest.approx(list(model.idf), abs=1e-15)
        doc = "i want to die today"
        assert transform(loaded, doc).values == pytest.approx(
            list(transform(model, doc).values)
        )

    def test_rejects_wrong_kind(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"kind": "something_else"}')
        with pytest.raises(ValueError, match="not a tf-idf"):
            load_tfidf(path)

    def test_rejects_unsorted_vocabulary(self, tmp_path):
        model = fit_tfidf(["b a"], UNIGRAMS)
        path = tmp_path / "tfidf.json"
        save_tfidf(model, path)
        tampered = path.read_text().replace('["a", "b"]', '["b", "a"]')
        path.write_text(tampered)
        with pytest.raises(ValueError, match="lexicographic"):
            load_tfidf(path)


class TestCsr:
    def test_stacking(self):
        model = fit_tfidf(["a b", "b c"], UNIGRAMS)
        docs = ["a b", "b c", "zzz"]
        matrix = to_csr(transform_many(model, docs), model.n_features)
        assert matrix.shape == (3, model.n_features)
        dense = matrix.toarray()
        assert dense[2].sum() == 0.0
        assert np.linalg.norm(dense[0]) == pytest.approx(1.0, abs=1e-9)
