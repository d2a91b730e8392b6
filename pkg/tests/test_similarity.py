import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_book, make_script, unit_vectors
from narralign.corpus import Document, Paragraph
from narralign.errors import DegenerateDistribution, InputError, InvariantViolation
from narralign.similarity import (
    EmbeddingMatrix,
    SimilarityModel,
    build_model,
    calibrate,
    cosine,
    raw_embedding_cosine,
    raw_hamming,
    raw_jaccard,
    read_embeddings,
    score_from_z,
    summarize_scores,
    write_embeddings,
)

words = st.sampled_from("a b c d e apple tree".split())
texts = st.lists(words, min_size=1, max_size=12).map(" ".join)


def one_paragraph_doc(kind: str, *texts: str) -> Document:
    pars = tuple(
        Paragraph(
            index=i,
            text=t,
            chapter_id=0 if kind == "book" else None,
            scene_id=0 if kind == "script" else None,
        )
        for i, t in enumerate(texts)
    )
    return Document(doc_id=kind, kind=kind, paragraphs=pars)


class TestRawJaccard:
    def test_identical(self):
        assert raw_jaccard("the owl flew", "the owl flew") == 1.0

    def test_disjoint(self):
        assert raw_jaccard("apple pear", "stone iron") == 0.0

    def test_multiset_counts(self):
        # multisets {a,a,b} and {a,b,b}: intersection 2, union 4
        assert raw_jaccard("a a b", "a b b") == 0.5

    def test_empty_union(self):
        assert raw_jaccard("...", "!!!") == 0.0

    @given(texts, texts)
    def test_symmetric_and_bounded(self, a, b):
        v = raw_jaccard(a, b)
        assert v == raw_jaccard(b, a)
        assert 0.0 <= v <= 1.0


class TestRawHamming:
    def test_identical_single_word(self):
        assert raw_hamming("owl", "owl") == 1.0

    def test_no_matches(self):
        assert raw_hamming("a b", "x y z w") == 0.0

    def test_chunk_containment(self):
        # shorter "a b" vs longer "a q b q": chunk0={a,q} has a, chunk1={b,q} has b
        assert raw_hamming("a b", "a q b q") == 1.0

    def test_half_match(self):
        assert raw_hamming("a b", "a q x q") == 0.5

    @given(texts, texts)
    def test_symmetric(self, a, b):
        assert raw_hamming(a, b) == raw_hamming(b, a)
        assert 0.0 <= raw_hamming(a, b) <= 1.0


class TestRawTfidf:
    def test_identical_paragraphs(self):
        book = one_paragraph_doc("book", "green owl", "other words")
        script = one_paragraph_doc("script", "green owl", "unrelated stuff")
        model = SimilarityModel("tfidf", book, script)
        assert model.raw(0, 0) == pytest.approx(1.0, abs=1e-12)

    def test_no_shared_terms(self):
        book = one_paragraph_doc("book", "alpha beta", "x y")
        script = one_paragraph_doc("script", "gamma delta", "z w")
        model = SimilarityModel("tfidf", book, script)
        assert model.raw(0, 0) == 0.0

    def test_two_paragraph_corpus_hand_computed(self):
        # corpus = {"apple banana", "apple cherry"}, N=2
        # idf(apple) = ln(3/3)+1 = 1, idf(banana) = idf(cherry) = ln(3/2)+1
        # cosine = 1 / (1 + (ln(3/2)+1)^2)  [frozen: 0.33609692727625745]
        book = one_paragraph_doc("book", "apple banana")
        script = one_paragraph_doc("script", "apple cherry")
        model = SimilarityModel("tfidf", book, script)
        idf_rare = math.log(3 / 2) + 1
        expected = 1.0 / (1.0 + idf_rare**2)
        assert model.raw(0, 0) == pytest.approx(expected, abs=1e-12)
        assert model.raw(0, 0) == pytest.approx(0.33609692727625745, abs=1e-12)


class TestRawGloveMean:
    TABLE = {
        "east": np.array([1.0, 0.0], dtype=np.float32),
        "north": np.array([0.0, 1.0], dtype=np.float32),
        "both": np.array([1.0, 1.0], dtype=np.float32),
    }

    def build(self, book_texts, script_texts):
        book = one_paragraph_doc("book", *book_texts)
        script = one_paragraph_doc("script", *script_texts)
        return SimilarityModel("glove_mean", book, script, word_vectors=self.TABLE)

    def test_same_text(self):
        model = self.build(["east north"], ["east north"])
        assert model.raw(0, 0) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_single_words(self):
        model = self.build(["east"], ["north"])
        assert model.raw(0, 0) == 0.0

    def test_all_oov_gives_zero(self):
        model = self.build(["zzz qqq"], ["east"])
        assert model.raw(0, 0) == 0.0

    def test_oov_words_skipped(self):
        model = self.build(["east zzz"], ["east"])
        assert model.raw(0, 0) == pytest.approx(1.0, abs=1e-12)


class TestEmbeddingCosine:
    def test_self_similarity(self):
        m = EmbeddingMatrix("d", 3, np.array([[1.0, 2.0, 2.0]], dtype=np.float32))
        assert raw_embedding_cosine(m, 0, m, 0) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        m = EmbeddingMatrix(
            "d", 2, np.array([[1.0, 0.0], [0.0, 1.0]], dtype=np.float32)
        )
        assert raw_embedding_cosine(m, 0, m, 1) == 0.0

    def test_hand_computed(self):
        # (1,2,2)·(2,2,1) = 8, norms 3 and 3 -> 8/9
        m = EmbeddingMatrix(
            "d", 3, np.array([[1, 2, 2], [2, 2, 1]], dtype=np.float32)
        )
        assert raw_embedding_cosine(m, 0, m, 1) == pytest.approx(8 / 9, abs=1e-12)

    def test_zero_norm_row(self):
        m = EmbeddingMatrix(
            "d", 2, np.array([[0.0, 0.0], [1.0, 0.0]], dtype=np.float32)
        )
        assert cosine(m.vectors[0], m.vectors[1]) == 0.0
        assert m.zero_rows() == {0}


class TestEmbeddingFile:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        matrix = EmbeddingMatrix("doc-1", 5, unit_vectors(7, 5, rng))
        path = str(tmp_path / "vecs.f32")
        write_embeddings(matrix, path)
        loaded = read_embeddings(path)
        assert loaded.doc_id == "doc-1"
        assert loaded.dim == 5 and loaded.count == 7
        assert np.array_equal(loaded.vectors, matrix.vectors)

    def test_file_size_is_header_plus_payload(self, tmp_path):
        import os

        matrix = EmbeddingMatrix("d", 4, np.zeros((3, 4), dtype=np.float32))
        path = str(tmp_path / "vecs.f32")
        write_embeddings(matrix, path)
        with open(path, "rb") as fh:
            header_len = len(fh.readline())
        assert os.path.getsize(path) == header_len + 4 * 3 * 4

    def test_truncated_payload_rejected(self, tmp_path):
        matrix = EmbeddingMatrix("d", 4, np.ones((3, 4), dtype=np.float32))
        path = str(tmp_path / "vecs.f32")
        write_embeddings(matrix, path)
        data = open(path, "rb").read()
        open(path, "wb").write(data[:-8])
        with pytest.raises(InputError):
            read_embeddings(path)

    def test_nan_rejected(self):
        bad = np.full((2, 2), np.nan, dtype=np.float32)
        with pytest.raises(InvariantViolation):
            EmbeddingMatrix("d", 2, bad)


class TestCalibration:
    def test_even_split_two_point_distribution(self):
        mu, sigma = summarize_scores([0.0, 1.0] * 200)
        assert mu == 0.5
        assert sigma == 0.5

    def test_degenerate_distribution(self):
        with pytest.raises(DegenerateDistribution):
            summarize_scores([0.7] * 500)

    def test_degenerate_via_identical_corpora(self):
        book = one_paragraph_doc("book", "same words here", "same words here")
        script = one_paragraph_doc("script", "same words here", "same words here")
        model = SimilarityModel("jaccard", book, script)
        with pytest.raises(DegenerateDistribution):
            calibrate(model, sample_count=200, seed=1)

    def test_deterministic_given_seed(self):
        book = make_book([10])
        script = make_script([10])
        a = build_model("jaccard", book, script, sample_count=500, seed=42).calibration
        b = build_model("jaccard", book, script, sample_count=500, seed=42).calibration
        assert a == b

    def test_seed_changes_sample(self):
        book = make_book([10])
        script = make_script([10])
        a = build_model("jaccard", book, script, sample_count=500, seed=1).calibration
        b = build_model("jaccard", book, script, sample_count=500, seed=2).calibration
        assert a != b

    def test_sample_count_floor(self):
        book = make_book([5])
        script = make_script([5])
        model = SimilarityModel("jaccard", book, script)
        with pytest.raises(ValueError):
            calibrate(model, sample_count=50)

    def test_zero_rows_excluded_from_sampling(self):
        rng = np.random.default_rng(3)
        book = make_book([4])
        script = make_script([4])
        book_vecs = unit_vectors(4, 8, rng)
        book_vecs[2] = 0.0
        emb_b = EmbeddingMatrix("book", 8, book_vecs)
        emb_s = EmbeddingMatrix("script", 8, unit_vectors(4, 8, rng))
        model = SimilarityModel(
            "embedding_cosine", book, script,
            book_embeddings=emb_b, script_embeddings=emb_s,
        )
        assert model._usable_book == [0, 1, 3]
        calibrate(model, sample_count=300, seed=0)

    def test_row_count_mismatch(self):
        rng = np.random.default_rng(3)
        book = make_book([4])
        script = make_script([4])
        emb = EmbeddingMatrix("book", 8, unit_vectors(3, 8, rng))
        emb_s = EmbeddingMatrix("script", 8, unit_vectors(4, 8, rng))
        with pytest.raises(InvariantViolation):
            SimilarityModel(
                "embedding_cosine", book, script,
                book_embeddings=emb, script_embeddings=emb_s,
            )


class TestScore:
    def fixed_model(self, mu=0.0, sigma=1.0, th_s=0.6):
        book = make_book([4])
        script = make_script([4])
        model = SimilarityModel("jaccard", book, script, th_s=th_s)
        from narralign.similarity import Calibration

        model.calibration = Calibration(mu=mu, sigma=sigma, sample_count=100, seed=0)
        return model

    def test_z_at_threshold_gives_zero(self):
        assert score_from_z(0.6, th_s=0.6) == 0.0

    def test_limits(self):
        assert score_from_z(80.0) == pytest.approx(1.0, abs=1e-9)
        assert score_from_z(-80.0) == pytest.approx(-1.0, abs=1e-9)
        assert abs(score_from_z(80.0)) < 1.0
        assert abs(score_from_z(-80.0)) < 1.0

    def test_sign_matches_threshold_rule(self):
        zs = np.linspace(-6, 6, 1201)
        scores = score_from_z(zs, th_s=0.6)
        assert np.array_equal(np.sign(scores), np.sign(zs - 0.6))

    def test_scalar_and_vector_agree(self):
        zs = np.linspace(-10, 10, 101)
        vec = score_from_z(zs, th_s=0.6)
        for z, s in zip(zs, vec):
            assert score_from_z(float(z), th_s=0.6) == s

    @given(st.floats(-30, 30), st.floats(-30, 30))
    def test_strictly_increasing(self, z1, z2):
        if z1 == z2 or abs(z1 - z2) < 1e-9 or max(abs(z1), abs(z2)) > 25:
            return
        lo, hi = sorted([z1, z2])
        assert score_from_z(lo) < score_from_z(hi)

    def test_mean_score_negative_over_calibration_sample(self):
        # with th_s > 0 random pairs score negative on average
        rng = np.random.default_rng(8)
        book = make_book([30], vocab_of=lambda i: [f"tok{rng.integers(60)}" for _ in range(6)])
        script = make_script([30])
        model = build_model("jaccard", book, script, sample_count=2000, seed=5)
        cal = model.calibration
        zs = np.array(
            [
                (model.raw(i, j) - cal.mu) / cal.sigma
                for i in range(model.m)
                for j in range(model.n)
            ]
        )
        assert float(np.mean(score_from_z(zs, th_s=0.6))) < 0.0

    def test_score_uses_calibration(self):
        model = self.fixed_model(mu=0.25, sigma=0.5)
        raw = model.raw(0, 0)
        z = (raw - 0.25) / 0.5
        assert model.score(0, 0) == score_from_z(z, th_s=0.6)
        # sanity on the sigmoid itself: z=0.5 under th_s=0.6 lands below zero
        assert score_from_z(0.5, 0.6) == pytest.approx(2 / (1 + math.exp(0.1)) - 1)

    def test_score_matrix_matches_pointwise_scores(self):
        book = make_book([6])
        script = make_script([5])
        model = build_model("jaccard", book, script, sample_count=400, seed=9)
        matrix = model.score_matrix()
        for i in range(model.m):
            for j in range(model.n):
                assert matrix[i, j] == model.score(i, j)

    def test_uncalibrated_model_refuses_to_score(self):
        book = make_book([3])
        script = make_script([3])
        model = SimilarityModel("jaccard", book, script)
        with pytest.raises(InvariantViolation):
            model.score(0, 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_calibrated_scores_deterministic(seed):
    book = make_book([8])
    script = make_script([8])
    a = build_model("hamming", book, script, sample_count=200, seed=seed)
    b = build_model("hamming", book, script, sample_count=200, seed=seed)
    assert a.calibration == b.calibration
    assert np.array_equal(a.score_matrix(), b.score_matrix())
