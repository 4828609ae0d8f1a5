"""Per-fact context construction: oracle, retrieved, adversarial, generated.

All builders are pure functions over immutable inputs; adversarial
sampling uses a per-fact RNG stream so results never depend on execution
order or thread count.
"""

from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass

from . import corpus_index, probe_data
from .errors import MissingEvidenceError, NoDonorError
from .textnorm import answer_in_text, fnv1a_64

logger = logging.getLogger(__name__)

STRATEGY_NONE = "none"
STRATEGY_ORACLE = "oracle"
STRATEGY_RETRIEVED = "retrieved"
STRATEGY_ADVERSARIAL = "adversarial"
STRATEGY_GENERATED = "generated"

STRATEGIES = (
    STRATEGY_NONE,
    STRATEGY_ORACLE,
    STRATEGY_RETRIEVED,
    STRATEGY_ADVERSARIAL,
    STRATEGY_GENERATED,
)

# A sentence ends at . ! or ? followed by whitespace and an uppercase
# letter, or at end of text. Deterministic by design.
_SENTENCE_BREAK = re.compile(r"(?<=[.!?])\s+(?=[A-Z])")


@dataclass(frozen=True)
class Context:
    """A text snippet attached to a fact, tagged with how it was built.

    ``miss`` marks a retrieval that returned nothing; such contexts keep
    their strategy tag but carry empty text (the scorer then behaves as if
    no context were given).
    """

    fact_uuid: str
    strategy: str
    text: str
    source_id: str
    answer_present: bool
    miss: bool = False

    def to_json(self) -> dict:
        return {
            "uuid": self.fact_uuid,
            "strategy": self.strategy,
            "text": self.text,
            "source_id": self.source_id,
            "answer_present": self.answer_present,
        }


def none_context(fact: probe_data.Fact) -> Context:
    return Context(fact.uuid, STRATEGY_NONE, "", "", False)


def split_sentences(text: str) -> list[str]:
    """Split on the documented deterministic sentence-boundary rule."""
    text = text.strip()
    if not text:
        return []
    return _SENTENCE_BREAK.split(text)


def oracle_context(fact: probe_data.Fact, max_sentences: int = 5) -> Context:
    """Evidence snippet truncated to at most ``max_sentences`` sentences."""
    if not fact.evidence:
        raise MissingEvidenceError(f"fact {fact.uuid} has no evidence snippet")
    sentences = split_sentences(fact.evidence)[:max_sentences]
    text = " ".join(sentences)
    return Context(
        fact_uuid=fact.uuid,
        strategy=STRATEGY_ORACLE,
        text=text,
        source_id=fact.uuid,
        answer_present=answer_in_text(text, fact.answer),
    )


def retrieved_context(
    fact: probe_data.Fact,
    index: corpus_index.TfidfIndex,
    query_mode: str = "question",
) -> Context:
    """Top-1 paragraph for the fact's question (or cloze statement).

    An empty retrieval result yields a flagged miss with empty text rather
    than an error.
    """
    if query_mode == "question":
        query_text = probe_data.to_natural_question(fact)
    elif query_mode == "cloze":
        query_text = probe_data.instantiate_cloze(fact).text
    else:
        raise ValueError(f"unknown query_mode {query_mode!r}")

    ranked = corpus_index.query(index, query_text, k=1)
    if not ranked:
        return Context(fact.uuid, STRATEGY_RETRIEVED, "", "", False, miss=True)
    para_id, _score = ranked[0]
    text = index.text_of(para_id)
    return Context(
        fact_uuid=fact.uuid,
        strategy=STRATEGY_RETRIEVED,
        text=text,
        source_id=para_id,
        answer_present=answer_in_text(text, fact.answer),
    )


def eligible_donors(fact: probe_data.Fact, facts: probe_data.FactSet) -> list[probe_data.Fact]:
    """Same relation, different answer, different uuid, non-empty evidence."""
    return [
        donor
        for donor in facts
        if donor.relation == fact.relation
        and donor.uuid != fact.uuid
        and donor.answer != fact.answer
        and donor.evidence
    ]


def adversarial_context(
    fact: probe_data.Fact,
    facts: probe_data.FactSet,
    seed: int,
    max_sentences: int = 5,
) -> Context:
    """Oracle context borrowed from a random same-relation fact.

    The donor is drawn uniformly from the eligible facts using an RNG
    seeded by ``seed XOR fnv1a_64(fact.uuid)``, so the assignment is
    reproducible fact-by-fact under any parallel schedule.
    """
    donors = eligible_donors(fact, facts)
    if not donors:
        raise NoDonorError(
            f"fact {fact.uuid}: no same-relation donor with a different answer and evidence"
        )
    rng = random.Random((seed ^ fnv1a_64(fact.uuid.encode("utf-8"))) & 0xFFFFFFFFFFFFFFFF)
    donor = donors[rng.randrange(len(donors))]
    borrowed = oracle_context(donor, max_sentences=max_sentences)
    return Context(
        fact_uuid=fact.uuid,
        strategy=STRATEGY_ADVERSARIAL,
        text=borrowed.text,
        source_id=donor.uuid,
        answer_present=answer_in_text(borrowed.text, fact.answer),
    )


@dataclass(frozen=True)
class ImportReport:
    """What happened while importing externally generated contexts."""

    missing_uuids: tuple[str, ...]
    unknown_uuids: tuple[str, ...]
    duplicate_uuids: tuple[str, ...]


def import_generated(
    path: str, facts: probe_data.FactSet
) -> tuple[dict[str, Context], ImportReport]:
    """Import generated contexts from JSONL ``{"uuid": ..., "text": ...}``.

    First record wins on duplicates; unknown uuids are reported, as are
    facts the file does not cover.
    """
    known = {fact.uuid: fact for fact in facts}
    contexts: dict[str, Context] = {}
    unknown: list[str] = []
    duplicates: list[str] = []

    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            uuid = str(obj["uuid"])
            text = str(obj["text"])
            if uuid not in known:
                unknown.append(uuid)
                logger.warning("generated context for unknown uuid %s", uuid)
                continue
            if uuid in contexts:
                duplicates.append(uuid)
                continue
            contexts[uuid] = Context(
                fact_uuid=uuid,
                strategy=STRATEGY_GENERATED,
                text=text,
                source_id=path,
                answer_present=answer_in_text(text, known[uuid].answer),
            )

    missing = tuple(uuid for uuid in known if uuid not in contexts)
    return contexts, ImportReport(
        missing_uuids=missing,
        unknown_uuids=tuple(unknown),
        duplicate_uuids=tuple(duplicates),
    )


def answer_in_context(context: Context, answer: str) -> bool:
    """Token-level answer membership: lowercase, outer punctuation stripped."""
    return answer_in_text(context.text, answer)


def write_contexts(contexts, path: str) -> None:
    """Write contexts as JSONL in the documented output schema."""
    with open(path, "w", encoding="utf-8") as fh:
        for ctx in contexts:
            fh.write(json.dumps(ctx.to_json(), ensure_ascii=False) + "\n")
