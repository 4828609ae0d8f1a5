"""Deterministic synthetic probe used by demos, tests, and acceptance runs.

The generator builds a small relational probe whose behavior under the
mock scorers is fully predictable, and computes the expected outcomes
with its own enumeration logic (plain set arithmetic, no scorer code):

  * every oracle evidence contains its fact's answer and overlaps its
    query well past the relevance-gate threshold;
  * every adversarial donor evidence falls well below the threshold;
  * with a uniform prior, the no-context argmax is always the first
    vocabulary token, so no-context P@1 equals the fraction of facts
    whose answer is that token.

Run ``python -m ctxprobe.synthetic <dir>`` to materialize the files.
"""

from __future__ import annotations

import json
import os
import random
import string
from dataclasses import dataclass

from .textnorm import default_stopwords

DEFAULT_N_RELATIONS = 5
DEFAULT_FACTS_PER_RELATION = 10
DEFAULT_SEED = 20240117

_RELATION_TEMPLATES = [
    ("birth-place", "[X] was born in [Y] .", "Where was [X] born?"),
    ("work-field", "[X] works in the field of [Y] .", "What field does [X] work in?"),
    ("death-place", "[X] died in [Y] .", "Where did [X] die?"),
    ("position", "[X] plays in [Y] position .", "What position does [X] play?"),
    ("location", "[X] is located in [Y] .", "Where is [X] located?"),
]

_CONSONANTS = "bcdfgklmnprstvz"
_VOWELS = "aeiou"


def _pseudo_word(rng: random.Random, taken: set[str], stopwords: frozenset[str]) -> str:
    """A unique capitalized pseudo-word that is not a stopword."""
    while True:
        word = "".join(
            rng.choice(_CONSONANTS) + rng.choice(_VOWELS) for _ in range(3)
        ).capitalize()
        low = word.lower()
        if low not in taken and low not in stopwords:
            taken.add(low)
            return word


def _words(text: str, stopwords: frozenset[str]) -> set[str]:
    """Independent re-implementation of the content-word rule for verification."""
    out = set()
    for raw in text.split():
        if raw == "[MASK]":
            continue
        tok = raw.strip(string.punctuation).lower()
        if tok and tok not in stopwords:
            out.add(tok)
    return out


def _jaccard(a: set[str], b: set[str]) -> float:
    union = a | b
    return len(a & b) / len(union) if union else 0.0


@dataclass
class SyntheticProbe:
    """All files of the synthetic probe plus its expected outcomes."""

    facts_rows: list[dict]
    relations_rows: list[dict]
    vocab_tokens: list[str]
    corpus_rows: list[dict]
    generated_rows: list[dict]
    expected: dict

    def write(self, out_dir: str) -> dict[str, str]:
        os.makedirs(out_dir, exist_ok=True)
        paths = {
            "facts": os.path.join(out_dir, "facts.jsonl"),
            "relations": os.path.join(out_dir, "relations.jsonl"),
            "vocab": os.path.join(out_dir, "vocab.txt"),
            "corpus": os.path.join(out_dir, "corpus.jsonl"),
            "generated": os.path.join(out_dir, "generated.jsonl"),
            "expected": os.path.join(out_dir, "expected.json"),
        }
        with open(paths["facts"], "w", encoding="utf-8") as fh:
            for row in self.facts_rows:
                fh.write(json.dumps(row) + "\n")
        with open(paths["relations"], "w", encoding="utf-8") as fh:
            for row in self.relations_rows:
                fh.write(json.dumps(row) + "\n")
        with open(paths["vocab"], "w", encoding="utf-8") as fh:
            for token in self.vocab_tokens:
                fh.write(token + "\n")
        with open(paths["corpus"], "w", encoding="utf-8") as fh:
            for row in self.corpus_rows:
                fh.write(json.dumps(row) + "\n")
        with open(paths["generated"], "w", encoding="utf-8") as fh:
            for row in self.generated_rows:
                fh.write(json.dumps(row) + "\n")
        with open(paths["expected"], "w", encoding="utf-8") as fh:
            json.dump(self.expected, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return paths


def make_synthetic_probe(
    n_relations: int = DEFAULT_N_RELATIONS,
    facts_per_relation: int = DEFAULT_FACTS_PER_RELATION,
    seed: int = DEFAULT_SEED,
    gate_threshold: float = 0.5,
) -> SyntheticProbe:
    """Build the probe and verify its gate properties by direct enumeration."""
    if n_relations > len(_RELATION_TEMPLATES):
        raise ValueError(f"at most {len(_RELATION_TEMPLATES)} relations available")
    rng = random.Random(seed)
    stopwords = default_stopwords()
    taken: set[str] = set()
    # Reserve template words so answers/subjects can never collide with them.
    for _, template, question in _RELATION_TEMPLATES:
        taken.update(_words(template, stopwords) - {"x", "y"})
        taken.update(_words(question, stopwords) - {"x", "y"})

    shared_answer = _pseudo_word(rng, taken, stopwords)

    relations_rows = []
    facts_rows = []
    corpus_rows = []
    queries: dict[str, str] = {}
    evidences: dict[str, str] = {}
    answers: dict[str, str] = {}
    relations_of: dict[str, str] = {}

    for rel_idx in range(n_relations):
        relation, template, question = _RELATION_TEMPLATES[rel_idx]
        relations_rows.append({"relation": relation, "template": template, "question": question})
        for fact_idx in range(facts_per_relation):
            uuid = f"fact-{relation}-{fact_idx:03d}"
            subject = _pseudo_word(rng, taken, stopwords)
            answer = shared_answer if fact_idx == 0 else _pseudo_word(rng, taken, stopwords)
            evidence = template.replace("[X]", subject).replace("[Y]", answer)
            facts_rows.append(
                {
                    "uuid": uuid,
                    "relation": relation,
                    "sub_label": subject,
                    "obj_label": answer,
                    "evidences": [{"text": evidence}],
                }
            )
            corpus_rows.append({"para_id": f"para-{uuid}", "doc_id": uuid, "text": evidence})
            queries[uuid] = template.replace("[X]", subject).replace("[Y]", "[MASK]")
            evidences[uuid] = evidence
            answers[uuid] = answer
            relations_of[uuid] = relation

    # Distractor paragraphs that never mention any candidate.
    for i in range(10):
        filler = " ".join(_pseudo_word(rng, taken, stopwords) for _ in range(8))
        corpus_rows.append({"para_id": f"para-filler-{i:02d}", "doc_id": f"filler-{i:02d}", "text": filler + " ."})

    # "Generated" contexts: fluent continuations of the question, so their
    # query overlap is as high as the oracle's. 30% of them hallucinate a
    # non-candidate token in place of the answer.
    generated_rows = []
    hallucinated: set[str] = set()
    for row in facts_rows:
        uuid = row["uuid"]
        fact_idx = int(uuid.rsplit("-", 1)[1])
        text = evidences[uuid]
        if fact_idx % 10 >= 7:
            bogus = _pseudo_word(rng, taken, stopwords)
            text = text.replace(answers[uuid], bogus)
            hallucinated.add(uuid)
        generated_rows.append({"uuid": uuid, "text": text})

    other_answers = sorted({a for a in answers.values() if a != shared_answer})
    fillers = sorted(_pseudo_word(rng, taken, stopwords) for _ in range(5))
    vocab_tokens = [shared_answer] + other_answers + fillers

    # Verify the gate geometry by direct set arithmetic (raises on failure).
    for uuid, query in queries.items():
        q_words = _words(query, stopwords)
        own = _jaccard(q_words, _words(evidences[uuid], stopwords))
        if own <= gate_threshold:
            raise AssertionError(f"{uuid}: oracle overlap {own:.3f} not above {gate_threshold}")
        for donor_uuid, donor_evidence in evidences.items():
            if donor_uuid == uuid or relations_of[donor_uuid] != relations_of[uuid]:
                continue
            if answers[donor_uuid] == answers[uuid]:
                continue
            cross = _jaccard(q_words, _words(donor_evidence, stopwords))
            if cross >= gate_threshold:
                raise AssertionError(
                    f"{uuid} vs {donor_uuid}: adversarial overlap {cross:.3f} not below {gate_threshold}"
                )

    # Expected outcomes, enumerated from the construction alone.
    n_facts = len(facts_rows)
    first_token_hits = sum(1 for a in answers.values() if a == vocab_tokens[0])
    p1_none = 100.0 * first_token_hits / n_facts
    per_relation_none = {}
    for relation, _, _ in _RELATION_TEMPLATES[:n_relations]:
        group = [u for u, r in relations_of.items() if r == relation]
        hits = sum(1 for u in group if answers[u] == vocab_tokens[0])
        per_relation_none[relation] = 100.0 * hits / len(group)

    # Faithful generations get copied; hallucinated ones fall back to the
    # prior, which is only right when the answer is the first vocab token.
    generated_correct = sum(
        1
        for uuid in answers
        if uuid not in hallucinated or answers[uuid] == vocab_tokens[0]
    )
    p1_generated = 100.0 * generated_correct / n_facts

    expected = {
        "seed": seed,
        "n_facts": n_facts,
        "n_relations": n_relations,
        "first_vocab_token": vocab_tokens[0],
        "p1_none": p1_none,
        "per_relation_p1_none": per_relation_none,
        "p1_oracle_two_segment": 100.0,
        "p1_adversarial_two_segment": p1_none,
        "p1_adversarial_one_segment": 0.0,
        "p1_generated_two_segment": p1_generated,
        "nsp_rate_oracle": 100.0,
        "nsp_rate_adversarial": 0.0,
        "nsp_rate_generated": 100.0,
    }

    return SyntheticProbe(
        facts_rows=facts_rows,
        relations_rows=relations_rows,
        vocab_tokens=vocab_tokens,
        corpus_rows=corpus_rows,
        generated_rows=generated_rows,
        expected=expected,
    )


def main(argv=None) -> int:
    import argparse

    parser = argparse.ArgumentParser(description="Write the synthetic probe fixture files.")
    parser.add_argument("out_dir")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    parser.add_argument("--relations", type=int, default=DEFAULT_N_RELATIONS)
    parser.add_argument("--facts-per-relation", type=int, default=DEFAULT_FACTS_PER_RELATION)
    args = parser.parse_args(argv)
    probe = make_synthetic_probe(
        n_relations=args.relations,
        facts_per_relation=args.facts_per_relation,
        seed=args.seed,
    )
    paths = probe.write(args.out_dir)
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
