"""Hashed-feature TF-IDF paragraph retrieval with binary persistence.

Feature extraction (normative):
  * tokens are maximal ``\\w+`` runs of the lowercased text;
  * features are unigrams (stopwords removed) and n-grams up to
    ``ngram_order`` (stopwords kept inside n-grams);
  * each feature string is the n-gram's tokens joined by a single space,
    hashed with 32-bit FNV-1a over its UTF-8 bytes, modulo ``2**hash_bits``.

Weighting: ``weight(t, d) = log(1 + tf) * idf(t)`` with the smoothed,
clamped inverse document frequency
``idf(t) = max(0, log((N - n_t + 0.5) / (n_t + 0.5)))``. Queries are
scored by cosine similarity; ties break by ascending paragraph id.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import IndexBuildError, IndexFormatError
from .textnorm import answer_in_text, default_stopwords, fnv1a_32, retrieval_tokens

logger = logging.getLogger(__name__)

MAGIC = b"CTXIDX1\x00"
VERSION = 1

DEFAULT_HASH_BITS = 24
DEFAULT_NGRAM_ORDER = 2


@dataclass(frozen=True)
class Paragraph:
    """One retrievable text unit with a stable id."""

    para_id: str
    doc_id: str
    text: str


@dataclass(frozen=True)
class RecallCurve:
    """Recall percentage as a function of retrieval depth k."""

    points: tuple[tuple[int, float], ...]

    def recall_at(self, k: int) -> float:
        for kk, recall in self.points:
            if kk == k:
                return recall
        raise KeyError(k)


def load_corpus(path: str) -> list[Paragraph]:
    """Read a corpus JSONL file; paragraphs empty after normalization are dropped."""
    paragraphs = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            text = " ".join(str(obj["text"]).split())
            if not text:
                logger.warning("%s:%d: empty paragraph %s skipped", path, line_no, obj["para_id"])
                continue
            paragraphs.append(Paragraph(str(obj["para_id"]), str(obj.get("doc_id", "")), text))
    return paragraphs


def extract_features(
    text: str,
    ngram_order: int,
    stopwords: frozenset[str],
    hash_bits: int,
) -> dict[int, int]:
    """Hashed feature bins with term frequencies for one text."""
    tokens = retrieval_tokens(text)
    mod = 1 << hash_bits
    counts: Counter[int] = Counter()
    for tok in tokens:
        if tok not in stopwords:
            counts[fnv1a_32(tok.encode("utf-8")) % mod] += 1
    for n in range(2, ngram_order + 1):
        for i in range(len(tokens) - n + 1):
            gram = " ".join(tokens[i : i + n])
            counts[fnv1a_32(gram.encode("utf-8")) % mod] += 1
    return dict(counts)


def _build_postings(matrix: sparse.csr_matrix) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Invert the document matrix into per-bin postings for fast queries.

    The feature space is huge (2^hash_bits bins) but only occupied bins get
    an entry, so memory stays proportional to the number of stored weights.
    """
    coo = matrix.tocoo()
    if coo.nnz == 0:
        return {}
    order = np.lexsort((coo.row, coo.col))
    cols = coo.col[order]
    rows = coo.row[order].astype(np.int64)
    vals = coo.data[order]
    postings: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    boundaries = np.flatnonzero(np.diff(cols)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [len(cols)]))
    for start, end in zip(starts, ends):
        postings[int(cols[start])] = (rows[start:end], vals[start:end])
    return postings


class TfidfIndex:
    """Immutable hashed TF-IDF index over a paragraph corpus.

    Queries are lock-free and safe to run concurrently. Paragraph texts are
    kept alongside the vectors so that retrieval can hand back the actual
    paragraph, not just its id.
    """

    def __init__(
        self,
        para_ids: list[str],
        texts: list[str],
        matrix: sparse.csr_matrix,
        doc_norms: np.ndarray,
        idf: dict[int, float],
        hash_bits: int,
        ngram_order: int,
        stopwords: frozenset[str],
    ):
        self.para_ids = para_ids
        self.texts = texts
        self.matrix = matrix
        self.doc_norms = doc_norms
        self.idf = idf
        self.hash_bits = hash_bits
        self.ngram_order = ngram_order
        self.stopwords = stopwords
        self._id_to_pos = {pid: i for i, pid in enumerate(para_ids)}
        self._postings = _build_postings(matrix)

    @property
    def num_paragraphs(self) -> int:
        return len(self.para_ids)

    def text_of(self, para_id: str) -> str:
        return self.texts[self._id_to_pos[para_id]]

    def _vectorize_query(self, text: str) -> dict[int, float]:
        tf = extract_features(text, self.ngram_order, self.stopwords, self.hash_bits)
        vec = {}
        for bin_, count in tf.items():
            idf = self.idf.get(bin_, 0.0)
            if idf > 0.0:
                vec[bin_] = math.log(1.0 + count) * idf
        return vec


def build_index(
    paragraphs,
    hash_bits: int = DEFAULT_HASH_BITS,
    ngram_order: int = DEFAULT_NGRAM_ORDER,
    stopwords: frozenset[str] | None = None,
) -> TfidfIndex:
    """Build the index from an iterable of paragraphs (single pass, single writer)."""
    if stopwords is None:
        stopwords = default_stopwords()

    para_ids: list[str] = []
    texts: list[str] = []
    doc_features: list[dict[int, int]] = []
    doc_freq: Counter[int] = Counter()
    seen: set[str] = set()

    for para in paragraphs:
        if para.para_id in seen:
            raise IndexBuildError(f"duplicate para_id {para.para_id!r}")
        seen.add(para.para_id)
        features = extract_features(para.text, ngram_order, stopwords, hash_bits)
        para_ids.append(para.para_id)
        texts.append(para.text)
        doc_features.append(features)
        doc_freq.update(features.keys())

    n_docs = len(para_ids)
    if n_docs == 0 or not doc_freq:
        raise IndexBuildError("no usable paragraphs: nothing to index")

    idf = {}
    for bin_, df in doc_freq.items():
        value = math.log((n_docs - df + 0.5) / (df + 0.5))
        idf[bin_] = max(0.0, value)

    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for features in doc_features:
        for bin_ in sorted(features):
            weight = math.log(1.0 + features[bin_]) * idf[bin_]
            if weight > 0.0:
                indices.append(bin_)
                data.append(weight)
        indptr.append(len(indices))

    matrix = sparse.csr_matrix(
        (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(n_docs, 1 << hash_bits),
    )
    doc_norms = np.sqrt(np.asarray(matrix.multiply(matrix).sum(axis=1)).ravel())

    return TfidfIndex(
        para_ids=para_ids,
        texts=texts,
        matrix=matrix,
        doc_norms=doc_norms,
        idf=idf,
        hash_bits=hash_bits,
        ngram_order=ngram_order,
        stopwords=stopwords,
    )


def query(index: TfidfIndex, text: str, k: int) -> list[tuple[str, float]]:
    """Top-k paragraphs by cosine similarity, ties broken by para_id ascending.

    A query that normalizes to zero features returns an empty list.
    Paragraphs with no features score 0.0 but are still returned when k
    exceeds the number of positive-scoring paragraphs.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    qvec = index._vectorize_query(text)
    if not qvec:
        return []
    qnorm = math.sqrt(sum(w * w for w in qvec.values()))

    dots = np.zeros(index.num_paragraphs, dtype=np.float64)
    for bin_, weight in qvec.items():
        posting = index._postings.get(bin_)
        if posting is not None:
            rows, vals = posting
            dots[rows] += weight * vals

    denom = index.doc_norms * qnorm
    scores = np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)

    order = sorted(range(index.num_paragraphs), key=lambda i: (-scores[i], index.para_ids[i]))
    return [(index.para_ids[i], float(scores[i])) for i in order[:k]]


def save_index(index: TfidfIndex, path: str) -> None:
    """Write the index in the binary little-endian format.

    Layout: magic, u32 version, u32 hash_bits, u32 ngram_order, u64 N,
    para_id table (u32 length + UTF-8 bytes each), CSR arrays (u64 row
    offsets, u32 column bins, f64 weights), f64 doc_norms[N], idf table
    (u64 count, then u32 bin + f64 value pairs). Two trailing sections keep
    loaded indexes self-contained: the stopword table and the paragraph
    texts (both u64 count + length-prefixed UTF-8 entries).
    """
    matrix = index.matrix
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, index.hash_bits, index.ngram_order))
        fh.write(struct.pack("<Q", index.num_paragraphs))
        for pid in index.para_ids:
            raw = pid.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        fh.write(np.asarray(matrix.indptr, dtype="<u8").tobytes())
        fh.write(np.asarray(matrix.indices, dtype="<u4").tobytes())
        fh.write(np.asarray(matrix.data, dtype="<f8").tobytes())
        fh.write(np.asarray(index.doc_norms, dtype="<f8").tobytes())
        fh.write(struct.pack("<Q", len(index.idf)))
        for bin_ in sorted(index.idf):
            fh.write(struct.pack("<Id", bin_, index.idf[bin_]))
        stop_sorted = sorted(index.stopwords)
        fh.write(struct.pack("<Q", len(stop_sorted)))
        for word in stop_sorted:
            raw = word.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        fh.write(struct.pack("<Q", len(index.texts)))
        for text in index.texts:
            raw = text.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise IndexFormatError(f"{self.path}: truncated index file")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (length,) = self.unpack("<I")
        return self.take(length).decode("utf-8")


def load_index(path: str) -> TfidfIndex:
    """Load an index written by :func:`save_index`; queries round-trip exactly."""
    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), path)

    if reader.take(len(MAGIC)) != MAGIC:
        raise IndexFormatError(f"{path}: bad magic; not a ctxprobe index")
    version, hash_bits, ngram_order = reader.unpack("<III")
    if version != VERSION:
        raise IndexFormatError(f"{path}: unsupported index version {version}")
    (n_docs,) = reader.unpack("<Q")

    para_ids = [reader.string() for _ in range(n_docs)]
    indptr = np.frombuffer(reader.take(8 * (n_docs + 1)), dtype="<u8").astype(np.int64)
    nnz = int(indptr[-1])
    indices = np.frombuffer(reader.take(4 * nnz), dtype="<u4").astype(np.int64)
    data = np.frombuffer(reader.take(8 * nnz), dtype="<f8").astype(np.float64)
    doc_norms = np.frombuffer(reader.take(8 * n_docs), dtype="<f8").astype(np.float64)

    (idf_count,) = reader.unpack("<Q")
    idf = {}
    for _ in range(idf_count):
        bin_, value = reader.unpack("<Id")
        idf[bin_] = value

    (stop_count,) = reader.unpack("<Q")
    stopwords = frozenset(reader.string() for _ in range(stop_count))
    (text_count,) = reader.unpack("<Q")
    if text_count != n_docs:
        raise IndexFormatError(f"{path}: text table size {text_count} != N {n_docs}")
    texts = [reader.string() for _ in range(text_count)]

    matrix = sparse.csr_matrix((data, indices, indptr), shape=(n_docs, 1 << hash_bits))
    return TfidfIndex(
        para_ids=para_ids,
        texts=texts,
        matrix=matrix,
        doc_norms=doc_norms,
        idf=idf,
        hash_bits=hash_bits,
        ngram_order=ngram_order,
        stopwords=stopwords,
    )


def recall_at_k(index: TfidfIndex, facts, query_fn, k_max: int) -> RecallCurve:
    """Fraction of facts whose answer appears among the top-k paragraphs.

    The answer-membership rule is the same token-level match used for
    contexts. The curve is non-decreasing in k by construction.
    """
    if index.num_paragraphs == 0 or not len(facts):
        raise ValueError("recall_at_k requires a built index and at least one fact")
    k_max = min(k_max, index.num_paragraphs)
    hits_at = [0] * (k_max + 1)
    n_facts = 0
    for fact in facts:
        n_facts += 1
        ranked = query(index, query_fn(fact), k_max)
        first_hit = None
        for rank, (pid, _score) in enumerate(ranked, start=1):
            if answer_in_text(index.text_of(pid), fact.answer):
                first_hit = rank
                break
        if first_hit is not None:
            hits_at[first_hit] += 1
    points = []
    cumulative = 0
    for k in range(1, k_max + 1):
        cumulative += hits_at[k]
        points.append((k, 100.0 * cumulative / n_facts))
    return RecallCurve(points=tuple(points))
