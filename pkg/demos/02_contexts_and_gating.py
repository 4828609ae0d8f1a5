"""The four context strategies and the relevance gate, on a pair of facts.

Shows why the same distracting context is harmless in two-segment mode
(the overlap gate stays closed) but poisons the prediction when query and
context are concatenated into one segment.

    python3 demos/02_contexts_and_gating.py
"""

from ctxprobe.context_builder import adversarial_context, oracle_context
from ctxprobe.probe_data import Fact, FactSet, instantiate_cloze
from ctxprobe.scorer import CopyScorer, ScoreRequest, Vocabulary, mock_nsp

facts = FactSet(
    facts=(
        Fact(
            uuid="sandage", corpus="Other", relation="field",
            subject="Allan Sandage", answer="astronomy",
            cloze_template="[X] works in the field of [Y] .",
            question_template="What field does [X] work in?",
            evidence="Allan Sandage works in the field of astronomy . "
                     "Allan Sandage also works at an observatory .",
        ),
        Fact(
            uuid="freud", corpus="Other", relation="field",
            subject="Sigmund Freud", answer="psychology",
            cloze_template="[X] works in the field of [Y] .",
            question_template="What field does [X] work in?",
            evidence="Sigmund Freud works in the field of psychology .",
        ),
    ),
    relations={"field": ("[X] works in the field of [Y] .", "What field does [X] work in?")},
)

fact = facts.by_uuid("sandage")
query = instantiate_cloze(fact)
print("cloze query:", query.text)

oracle = oracle_context(fact)
adversarial = adversarial_context(fact, facts, seed=3)
print("\noracle context:     ", oracle.text)
print("adversarial context:", adversarial.text, f"(donor: {adversarial.source_id})")

print("\nword-overlap relevance scores against the query:")
print(f"  oracle:      {mock_nsp(query.text, oracle.text):.3f}")
print(f"  adversarial: {mock_nsp(query.text, adversarial.text):.3f}")

vocab = Vocabulary(["astronomy", "psychology", "economics"])
scorer = CopyScorer()  # lambda=0.9, gate at 0.5


def show(label, context_text, mode):
    request = ScoreRequest(
        query_text=query.text, context_text=context_text, mode=mode,
        candidates=vocab, top_k=3, request_id=fact.uuid,
    )
    prediction = scorer.score(request)
    top = ", ".join(f"{t} [{lp:.1f}]" for t, lp in prediction.top_k)
    nsp = "-" if prediction.nsp_prob is None else f"{prediction.nsp_prob:.2f}"
    print(f"  {label:34s} nsp={nsp:>4s}  ->  {top}")


print("\npredictions (copy mock):")
show("no context", None, "two_segment")
show("oracle, two_segment", oracle.text, "two_segment")
show("adversarial, two_segment", adversarial.text, "two_segment")
show("adversarial, one_segment", adversarial.text, "one_segment")
print("\nTwo segments: the gate rejects the donor context and the answer "
      "distribution is untouched.\nOne segment: the distractor is copied "
      "wholesale and the prediction flips.")
