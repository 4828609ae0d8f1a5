"""Hashed TF-IDF index: formula values, oracle equivalence, persistence, recall."""

import json
import math
import random
from concurrent.futures import ThreadPoolExecutor

import pytest

from ctxprobe import corpus_index
from ctxprobe.corpus_index import Paragraph, build_index, load_index, query, save_index
from ctxprobe.errors import IndexBuildError, IndexFormatError
from ctxprobe.textnorm import answer_in_text, default_stopwords

from oracles import dense_tfidf_rank

THREE_DOCS = [
    Paragraph("p1", "d1", "the cat sat"),
    Paragraph("p2", "d2", "the dog sat"),
    Paragraph("p3", "d3", "cats and dogs"),
]


def make_random_corpus(rng, n_paragraphs, word_pool):
    paragraphs = []
    for i in range(n_paragraphs):
        n_words = rng.randint(3, 25)
        text = " ".join(rng.choice(word_pool) for _ in range(n_words))
        paragraphs.append(Paragraph(f"p{i:04d}", f"d{i:04d}", text))
    return paragraphs


WORD_POOL = (
    "cat dog bird fish tree river mountain city road stone house garden king queen "
    "story music silver copper the a of in and was with from"
).split()


class TestBuildIndex:
    def test_idf_of_three_doc_corpus(self):
        index = build_index(THREE_DOCS)
        # "cat" appears in 1 of 3 docs: idf = log((3 - 1 + 0.5) / (1 + 0.5)).
        from ctxprobe.textnorm import fnv1a_32

        bin_ = fnv1a_32(b"cat") % (1 << index.hash_bits)
        assert index.num_paragraphs == 3
        assert index.idf[bin_] == pytest.approx(math.log(2.5 / 1.5))

    def test_idf_clamped_at_zero_for_ubiquitous_term(self):
        docs = [Paragraph(f"p{i}", "d", f"common word{i}") for i in range(4)]
        index = build_index(docs)
        from ctxprobe.textnorm import fnv1a_32

        bin_ = fnv1a_32(b"common") % (1 << index.hash_bits)
        # n_t = 4 of 4: log((0.5)/(4.5)) < 0, clamped.
        assert index.idf[bin_] == 0.0

    def test_duplicate_para_id_raises(self):
        docs = [Paragraph("p1", "d", "alpha"), Paragraph("p1", "d", "beta")]
        with pytest.raises(IndexBuildError, match="p1"):
            build_index(docs)

    def test_no_usable_paragraphs_raises(self):
        with pytest.raises(IndexBuildError):
            build_index([])


class TestQuery:
    def test_top1_matches_dense_oracle_on_three_docs(self):
        index = build_index(THREE_DOCS)
        ranked = query(index, "cat sat", k=3)
        oracle = dense_tfidf_rank(THREE_DOCS, "cat sat", 3, stopwords=default_stopwords())
        assert [pid for pid, _ in ranked] == [pid for pid, _ in oracle]
        assert ranked[0][0] == "p1"

    def test_k_larger_than_corpus_returns_all_sorted(self):
        index = build_index(THREE_DOCS)
        ranked = query(index, "cat", k=50)
        assert len(ranked) == 3
        scores = [s for _, s in ranked]
        assert scores == sorted(scores, reverse=True)

    def test_stopword_only_query_is_empty(self):
        index = build_index(THREE_DOCS)
        assert query(index, "the and", k=5) == []

    def test_scores_within_unit_interval(self):
        index = build_index(THREE_DOCS)
        for _, score in query(index, "cat sat dog", k=3):
            assert 0.0 <= score <= 1.0 + 1e-12

    def test_ties_break_by_para_id(self):
        docs = [
            Paragraph("pb", "d", "zebra"),
            Paragraph("pa", "d", "zebra"),
            Paragraph("pc", "d", "river stone"),
            Paragraph("pd", "d", "garden house"),
            Paragraph("pe", "d", "copper king"),
        ]
        index = build_index(docs)
        ranked = query(index, "zebra", k=2)
        assert [pid for pid, _ in ranked] == ["pa", "pb"]
        assert ranked[0][1] == ranked[1][1] > 0.0

    def test_rankings_match_dense_oracle_on_random_corpora(self):
        stopwords = default_stopwords()
        for seed in range(5):
            rng = random.Random(1000 + seed)
            paragraphs = make_random_corpus(rng, 60, WORD_POOL)
            index = build_index(paragraphs)
            for _ in range(10):
                text = " ".join(rng.choice(WORD_POOL) for _ in range(rng.randint(1, 6)))
                mine = [pid for pid, _ in query(index, text, 10)]
                oracle = [pid for pid, _ in dense_tfidf_rank(paragraphs, text, 10, stopwords=stopwords)]
                assert mine == oracle, f"seed {seed}, query {text!r}"

    def test_query_deterministic_across_threads(self):
        index = build_index(THREE_DOCS)
        expected = query(index, "cat sat", k=3)
        with ThreadPoolExecutor(max_workers=8) as pool:
            results = list(pool.map(lambda _: query(index, "cat sat", k=3), range(32)))
        assert all(r == expected for r in results)


class TestPersistence:
    def test_round_trip_identical_rankings_and_scores(self, tmp_path):
        index = build_index(THREE_DOCS)
        path = tmp_path / "idx.bin"
        save_index(index, str(path))
        loaded = load_index(str(path))
        assert loaded.para_ids == index.para_ids
        assert query(loaded, "cat sat", k=3) == query(index, "cat sat", k=3)

    def test_round_trip_preserves_texts_and_config(self, tmp_path):
        index = build_index(THREE_DOCS, hash_bits=20, ngram_order=2)
        path = tmp_path / "idx.bin"
        save_index(index, str(path))
        loaded = load_index(str(path))
        assert loaded.hash_bits == 20
        assert loaded.text_of("p3") == "cats and dogs"
        assert loaded.stopwords == index.stopwords

    def test_truncated_file_raises(self, tmp_path):
        index = build_index(THREE_DOCS)
        path = tmp_path / "idx.bin"
        save_index(index, str(path))
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(IndexFormatError, match="truncated"):
            load_index(str(path))

    def test_empty_file_raises(self, tmp_path):
        path = tmp_path / "empty.bin"
        path.write_bytes(b"")
        with pytest.raises(IndexFormatError):
            load_index(str(path))

    def test_bad_magic_raises(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOTANIDX" + b"\x00" * 64)
        with pytest.raises(IndexFormatError, match="magic"):
            load_index(str(path))


class FactStub:
    def __init__(self, uuid, answer, query_text):
        self.uuid = uuid
        self.answer = answer
        self.query_text = query_text


class TestRecallAtK:
    def _fixture(self):
        paragraphs = [
            Paragraph("p1", "d1", "Gadus was born in Oslo ."),
            Paragraph("p2", "d2", "Merel was born in Quito ."),
            Paragraph("p3", "d3", "Random filler about gardens ."),
        ]
        facts = [
            FactStub("f1", "Oslo", "Gadus was born in Oslo ."),
            FactStub("f2", "Quito", "Merel was born in Quito ."),
            FactStub("f3", "Nowhere", "Totally unrelated words here"),
        ]
        return paragraphs, facts

    def test_self_retrieval_recall_at_1(self):
        paragraphs, facts = self._fixture()
        index = build_index(paragraphs)
        curve = corpus_index.recall_at_k(
            index, facts[:2], lambda f: f.query_text, k_max=3
        )
        # Each query is its own evidence; the answer is in the top-1 paragraph.
        assert curve.recall_at(1) == 100.0

    def test_monotone_and_bounded(self):
        paragraphs, facts = self._fixture()
        index = build_index(paragraphs)
        curve = corpus_index.recall_at_k(index, facts, lambda f: f.query_text, k_max=3)
        values = [r for _, r in curve.points]
        assert values == sorted(values)
        assert all(0.0 <= v <= 100.0 for v in values)

    def test_recall_at_n_equals_exhaustive_presence(self):
        paragraphs, facts = self._fixture()
        index = build_index(paragraphs)
        n = index.num_paragraphs
        curve = corpus_index.recall_at_k(index, facts, lambda f: f.query_text, k_max=n)
        present = sum(
            1
            for f in facts
            if any(answer_in_text(p.text, f.answer) for p in paragraphs)
        )
        assert curve.recall_at(n) == pytest.approx(100.0 * present / len(facts))


def test_load_corpus_skips_empty_paragraphs(tmp_path):
    path = tmp_path / "corpus.jsonl"
    rows = [
        {"para_id": "p1", "doc_id": "d1", "text": "some text"},
        {"para_id": "p2", "doc_id": "d2", "text": "   "},
    ]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    paragraphs = corpus_index.load_corpus(str(path))
    assert [p.para_id for p in paragraphs] == ["p1"]
