"""Relational probe ingestion: facts, cloze statements, natural questions.

Fact files follow the public LAMA JSONL layout (``sub_label`` /
``obj_label`` / ``evidences``) so real dumps load unchanged. Templates
live in a separate relations file; records may override them with
per-record ``template`` / ``question`` fields (used by subsets whose
cloze statements were authored individually).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

from .errors import MissingTemplateError, TemplateError
from .textnorm import MASK_TOKEN

logger = logging.getLogger(__name__)

GOOGLE_RE = "GoogleRE"
TREX = "TREx"
SQUAD = "SQuAD"

_SUBJECT_SLOT = "[X]"
_ANSWER_SLOT = "[Y]"


@dataclass(frozen=True)
class Fact:
    """One relational probe item with a single-token answer."""

    uuid: str
    corpus: str
    relation: str
    subject: str
    answer: str
    cloze_template: str
    question_template: str | None = None
    evidence: str | None = None


@dataclass(frozen=True)
class FactSet:
    """Immutable, ordered collection of facts plus their relation templates."""

    facts: tuple[Fact, ...]
    relations: dict[str, tuple[str, str | None]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.facts)

    def __iter__(self):
        return iter(self.facts)

    def by_uuid(self, uuid: str) -> Fact:
        for fact in self.facts:
            if fact.uuid == uuid:
                return fact
        raise KeyError(uuid)


@dataclass(frozen=True)
class ClozeQuery:
    """An instantiated cloze statement with exactly one mask placeholder."""

    fact_uuid: str
    text: str
    answer: str


@dataclass(frozen=True)
class RecordError:
    """One skipped input record: where it came from and why."""

    line_no: int
    message: str


def load_relations(path: str) -> dict[str, tuple[str, str | None]]:
    """Read a relations JSONL file into ``relation -> (template, question)``."""
    relations: dict[str, tuple[str, str | None]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: malformed JSON ({exc})") from exc
            rel = obj["relation"]
            relations[rel] = (obj["template"], obj.get("question"))
    return relations


def _validate_cloze_template(template: str) -> None:
    if template.count(_SUBJECT_SLOT) != 1 or template.count(_ANSWER_SLOT) != 1:
        raise TemplateError(
            f"cloze template must contain exactly one {_SUBJECT_SLOT} and one "
            f"{_ANSWER_SLOT}: {template!r}"
        )


def load_facts(
    path: str,
    corpus: str,
    relations: dict[str, tuple[str, str | None]] | None = None,
) -> tuple[FactSet, list[RecordError]]:
    """Load a LAMA-style facts file.

    Malformed lines, missing templates, duplicate uuids and invalid answers
    produce per-record errors instead of aborting the load.
    """
    relations = dict(relations or {})
    facts: list[Fact] = []
    errors: list[RecordError] = []
    seen: set[str] = set()

    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                errors.append(RecordError(line_no, f"malformed JSON: {exc}"))
                continue
            try:
                uuid = str(obj["uuid"])
                relation = str(obj["relation"])
                subject = str(obj["sub_label"])
                answer = str(obj["obj_label"])
            except KeyError as exc:
                errors.append(RecordError(line_no, f"missing field {exc}"))
                continue
            if uuid in seen:
                errors.append(RecordError(line_no, f"duplicate uuid {uuid!r}; record rejected"))
                logger.warning("%s:%d: duplicate uuid %s", path, line_no, uuid)
                continue
            if not answer or any(ch.isspace() for ch in answer):
                errors.append(
                    RecordError(line_no, f"answer must be one whitespace-free token: {answer!r}")
                )
                continue

            template = obj.get("template")
            question = obj.get("question")
            if template is None:
                entry = relations.get(relation)
                if entry is None:
                    errors.append(RecordError(line_no, f"no template for relation {relation!r}"))
                    continue
                template, rel_question = entry
                if question is None:
                    question = rel_question
            try:
                _validate_cloze_template(template)
            except TemplateError as exc:
                errors.append(RecordError(line_no, str(exc)))
                continue
            if relation not in relations:
                relations[relation] = (template, question)

            evidence = None
            evidences = obj.get("evidences")
            if evidences:
                texts = [ev.get("text", "") for ev in evidences if ev.get("text")]
                if texts:
                    evidence = " ".join(texts)

            seen.add(uuid)
            facts.append(
                Fact(
                    uuid=uuid,
                    corpus=corpus,
                    relation=relation,
                    subject=subject,
                    answer=answer,
                    cloze_template=template,
                    question_template=question,
                    evidence=evidence,
                )
            )

    return FactSet(facts=tuple(facts), relations=relations), errors


def instantiate_cloze(fact: Fact) -> ClozeQuery:
    """Fill the subject slot and replace the answer slot with the mask."""
    _validate_cloze_template(fact.cloze_template)
    text = fact.cloze_template.replace(_SUBJECT_SLOT, fact.subject)
    text = text.replace(_ANSWER_SLOT, MASK_TOKEN)
    return ClozeQuery(fact_uuid=fact.uuid, text=text, answer=fact.answer)


def to_natural_question(fact: Fact) -> str:
    """Instantiate the natural-question template; always ends with ``?``."""
    if not fact.question_template:
        raise MissingTemplateError(
            f"relation {fact.relation!r} has no question template (fact {fact.uuid})"
        )
    if _SUBJECT_SLOT not in fact.question_template:
        raise TemplateError(
            f"question template lacks {_SUBJECT_SLOT}: {fact.question_template!r}"
        )
    question = fact.question_template.replace(_SUBJECT_SLOT, fact.subject)
    if not question.endswith("?"):
        question += "?"
    return question


def filter_by_vocab(facts: FactSet, vocab) -> tuple[FactSet, float]:
    """Keep facts whose answer token is in ``vocab``; report removed fraction.

    ``vocab`` needs only ``__contains__``. Idempotent by construction.
    """
    if not facts.facts:
        return facts, 0.0
    kept = tuple(f for f in facts.facts if f.answer in vocab)
    removed = 1.0 - len(kept) / len(facts.facts)
    return replace(facts, facts=kept), removed


@dataclass(frozen=True)
class DatasetStats:
    """Per-relation and per-corpus fact counts."""

    per_relation: dict[str, int]
    per_corpus: dict[str, tuple[int, int]]  # corpus -> (#facts, #relations)
    total_facts: int


def dataset_stats(facts: FactSet) -> DatasetStats:
    """Count facts per relation and per corpus; counts sum to the total."""
    per_relation: dict[str, int] = {}
    corpus_counts: dict[str, int] = {}
    corpus_relations: dict[str, set[str]] = {}
    for fact in facts:
        per_relation[fact.relation] = per_relation.get(fact.relation, 0) + 1
        corpus_counts[fact.corpus] = corpus_counts.get(fact.corpus, 0) + 1
        corpus_relations.setdefault(fact.corpus, set()).add(fact.relation)
    per_corpus = {
        corpus: (count, len(corpus_relations[corpus]))
        for corpus, count in corpus_counts.items()
    }
    return DatasetStats(
        per_relation=per_relation,
        per_corpus=per_corpus,
        total_facts=len(facts.facts),
    )
