"""Masked-LM scoring contract and deterministic mock scorers.

A scorer turns a (query, context) pair into log-probabilities over a
fixed candidate vocabulary plus a next-sentence probability. The mocks
reproduce the qualitative mechanisms of a real model at desk scale:

  * ``uniform``  ignores everything; every candidate gets 1/|V|.
  * ``prior``    candidate mass proportional to a unigram frequency table.
  * ``copy``     mixes candidate occurrences in the context with the prior,
                 but only when a relevance gate judges the context to be a
                 plausible continuation. In ``one_segment`` mode there is
                 no gate: the context always leaks into the prediction.

All scorers are stateless, deterministic, and safe to call from any
number of threads.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .errors import ScorerError
from .featurizer import MODE_ONE_SEGMENT, MODES
from .textnorm import content_words, match_tokens, normalize_token

DEFAULT_LAMBDA = 0.9
DEFAULT_GATE_THRESHOLD = 0.5


class Vocabulary:
    """Ordered unified candidate vocabulary; order is the tie-break order."""

    def __init__(self, tokens):
        self.tokens = tuple(tokens)
        self.index = {}
        for pos, tok in enumerate(self.tokens):
            if tok in self.index:
                raise ValueError(f"duplicate vocabulary token {tok!r}")
            self.index[tok] = pos

    @classmethod
    def from_file(cls, path: str) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh if line.strip()]
        return cls(tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


@dataclass(frozen=True)
class ScoreRequest:
    """One scoring job: a cloze query, an optional context, a candidate set."""

    query_text: str
    context_text: str | None
    mode: str
    candidates: Vocabulary
    top_k: int = 10
    request_id: str = ""

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class Prediction:
    """Candidate log-probabilities (natural log) plus NSP probability."""

    fact_uuid: str
    candidate_logprobs: tuple[float, ...]
    top_k: tuple[tuple[str, float], ...]
    nsp_prob: float | None
    argmax_token: str


def _finalize(
    probs: list[float],
    request: ScoreRequest,
    nsp_prob: float | None,
) -> Prediction:
    """Normalize, rank with vocabulary-order tie-breaking, build the Prediction."""
    total = sum(probs)
    if total <= 0.0 or not math.isfinite(total):
        raise ScorerError("candidate distribution has no probability mass")
    logprobs = tuple(
        math.log(p / total) if p > 0.0 else -math.inf for p in probs
    )
    order = sorted(range(len(logprobs)), key=lambda i: (-logprobs[i], i))
    vocab = request.candidates.tokens
    ranked = tuple((vocab[i], logprobs[i]) for i in order[: request.top_k])
    return Prediction(
        fact_uuid=request.request_id,
        candidate_logprobs=logprobs,
        top_k=ranked,
        nsp_prob=nsp_prob,
        argmax_token=vocab[order[0]],
    )


def mock_nsp(query_text: str, context_text: str) -> float:
    """Word-overlap stand-in for a next-sentence classifier.

    Jaccard overlap of the lowercased content-word sets of query and
    context (stopwords and the mask dropped); an empty union scores 0.
    """
    q = content_words(query_text)
    c = content_words(context_text)
    union = q | c
    if not union:
        return 0.0
    return len(q & c) / len(union)


def nsp_classify(prediction: Prediction) -> bool:
    """True iff the context was classified as a next sentence (strict > 0.5)."""
    if prediction.nsp_prob is None:
        raise ScorerError("prediction has no nsp_prob (scored without context)")
    return prediction.nsp_prob > DEFAULT_GATE_THRESHOLD


class UniformScorer:
    """Every candidate gets probability 1/|V|; the context is ignored."""

    name = "uniform"

    def score(self, request: ScoreRequest) -> Prediction:
        n = len(request.candidates)
        if n == 0:
            raise ScorerError("empty candidate vocabulary")
        nsp = None
        if request.context_text:
            nsp = mock_nsp(request.query_text, request.context_text)
        return _finalize([1.0] * n, request, nsp)


class PriorScorer:
    """Candidate mass proportional to a supplied unigram frequency table."""

    name = "prior"

    def __init__(self, frequencies: dict[str, float]):
        self.frequencies = dict(frequencies)

    def score(self, request: ScoreRequest) -> Prediction:
        probs = [max(self.frequencies.get(t, 0.0), 0.0) for t in request.candidates]
        nsp = None
        if request.context_text:
            nsp = mock_nsp(request.query_text, request.context_text)
        return _finalize(probs, request, nsp)


class CopyScorer:
    """Copy candidate occurrences from the context, gated by mock NSP.

    With the gate open and at least one candidate occurrence:
    ``P(t) = lambda * counts(t)/total + (1 - lambda) * prior(t)``.
    Otherwise the prediction falls back to the prior alone; in that case
    the candidate distribution is bit-identical to the context-free one
    (``nsp_prob`` still reports the gate value).

    In ``two_segment`` and ``separator_only`` modes the gate opens only
    when ``mock_nsp > gate_threshold``; in ``one_segment`` mode the
    context is always used.
    """

    name = "copy"

    def __init__(
        self,
        lam: float = DEFAULT_LAMBDA,
        gate_threshold: float = DEFAULT_GATE_THRESHOLD,
        prior: dict[str, float] | None = None,
    ):
        if not 0.0 <= lam <= 1.0:
            raise ValueError("lambda must be in [0, 1]")
        self.lam = lam
        self.gate_threshold = gate_threshold
        self.prior = dict(prior) if prior is not None else None

    def _prior_probs(self, request: ScoreRequest) -> list[float]:
        n = len(request.candidates)
        if self.prior is None:
            return [1.0 / n] * n
        probs = [max(self.prior.get(t, 0.0), 0.0) for t in request.candidates]
        total = sum(probs)
        if total <= 0.0:
            raise ScorerError("prior assigns no mass to any candidate")
        return [p / total for p in probs]

    def score(self, request: ScoreRequest) -> Prediction:
        n = len(request.candidates)
        if n == 0:
            raise ScorerError("empty candidate vocabulary")
        prior = self._prior_probs(request)

        if not request.context_text:
            return _finalize(prior, request, None)

        nsp = mock_nsp(request.query_text, request.context_text)
        gate_open = request.mode == MODE_ONE_SEGMENT or nsp > self.gate_threshold
        if not gate_open:
            return _finalize(prior, request, nsp)

        context_counts = Counter(match_tokens(request.context_text))
        counts = [context_counts.get(normalize_token(t), 0) for t in request.candidates]
        total = sum(counts)
        if total == 0:
            return _finalize(prior, request, nsp)

        probs = [
            self.lam * counts[i] / total + (1.0 - self.lam) * prior[i]
            for i in range(n)
        ]
        return _finalize(probs, request, nsp)


MOCK_SCORERS = ("uniform", "prior", "copy")


def make_mock_scorer(
    name: str,
    lam: float = DEFAULT_LAMBDA,
    gate_threshold: float = DEFAULT_GATE_THRESHOLD,
    prior: dict[str, float] | None = None,
):
    """Instantiate a mock scorer by name."""
    if name == "uniform":
        return UniformScorer()
    if name == "prior":
        if prior is None:
            raise ValueError("prior scorer needs a frequency table")
        return PriorScorer(prior)
    if name == "copy":
        return CopyScorer(lam=lam, gate_threshold=gate_threshold, prior=prior)
    raise ValueError(f"unknown mock scorer {name!r}")


def score(scorer, request: ScoreRequest) -> Prediction:
    """Score one request with any scorer implementing ``.score(request)``."""
    return scorer.score(request)
