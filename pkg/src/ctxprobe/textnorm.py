"""Text normalization shared by retrieval, context matching, and mock scoring.

Everything here is deliberately simple and bit-exactly documented: the
same normalization feeds the hashed retrieval features, the
answer-in-context membership rule, and the word-overlap relevance mock,
so changing any rule silently changes every downstream number.
"""

from __future__ import annotations

import re
import string
from functools import lru_cache
from importlib import resources

MASK_TOKEN = "[MASK]"

_WORD_RE = re.compile(r"\w+")
_PUNCT = string.punctuation

# FNV-1a constants (32- and 64-bit variants).
_FNV32_OFFSET = 0x811C9DC5
_FNV32_PRIME = 0x01000193
_FNV64_OFFSET = 0xCBF29CE484222325
_FNV64_PRIME = 0x100000001B3


def fnv1a_32(data: bytes) -> int:
    """32-bit FNV-1a hash; the normative feature hash for the index."""
    h = _FNV32_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV32_PRIME) & 0xFFFFFFFF
    return h


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a hash; used to derive per-fact RNG streams."""
    h = _FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV64_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


@lru_cache(maxsize=1)
def default_stopwords() -> frozenset[str]:
    """English stopword list shipped with the package, one word per line."""
    text = resources.files("ctxprobe.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(line.strip() for line in text.splitlines() if line.strip())


def retrieval_tokens(text: str) -> list[str]:
    """Lowercase word tokens for indexing: maximal runs of word characters.

    Punctuation is stripped implicitly because it can never be part of a
    ``\\w+`` run.
    """
    return _WORD_RE.findall(text.lower())


def normalize_token(token: str) -> str:
    """Lowercase and strip leading/trailing ASCII punctuation."""
    return token.strip(_PUNCT).lower()


def match_tokens(text: str) -> list[str]:
    """Whitespace tokens normalized per the answer-membership rule."""
    out = []
    for raw in text.split():
        tok = normalize_token(raw)
        if tok:
            out.append(tok)
    return out


def answer_in_text(text: str, answer: str) -> bool:
    """True iff ``answer`` equals some token of ``text`` after normalization.

    Token-level equality only; "Paris" does not match "Parisian".
    """
    if not text:
        return False
    target = normalize_token(answer)
    if not target:
        return False
    return target in match_tokens(text)


def content_words(text: str, stopwords: frozenset[str] | None = None) -> set[str]:
    """Lowercased content-word set: stopwords, punctuation and the mask dropped."""
    if stopwords is None:
        stopwords = default_stopwords()
    words: set[str] = set()
    for raw in text.split():
        if raw == MASK_TOKEN:
            continue
        tok = normalize_token(raw)
        if tok and tok not in stopwords:
            words.add(tok)
    return words
