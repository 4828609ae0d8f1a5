"""Model session: tokenizer, candidate mapping, layout assembly, scoring.

The session reproduces the client-side layout contract at subword level:

  two_segment     [CLS] q [SEP] c [SEP]   token_type_ids 0...0 | 1...1
  one_segment     [CLS] q c [SEP]         all zeros
  separator_only  [CLS] q [SEP] c [SEP]   all zeros

The context is truncated from its tail until the whole input fits in 512
positions; the query is never truncated. Mask-position logits are
restricted to the unified candidate vocabulary and renormalized.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass

import torch

logger = logging.getLogger(__name__)

MAX_LENGTH = 512
CLIENT_MASK = "[MASK]"

MODE_TWO_SEGMENT = "two_segment"
MODE_ONE_SEGMENT = "one_segment"
MODE_SEPARATOR_ONLY = "separator_only"
MODES = (MODE_TWO_SEGMENT, MODE_ONE_SEGMENT, MODE_SEPARATOR_ONLY)


class RequestError(ValueError):
    """Client error: maps to HTTP 400."""


@dataclass
class Layout:
    """Assembled subword input, echoed verbatim by the debug endpoint."""

    input_ids: list[int]
    token_type_ids: list[int]
    mask_index: int


class ModelSession:
    """One loaded model plus its unified-vocabulary candidate mapping.

    Candidates that do not map to exactly one subword, or that collide
    with an earlier candidate's subword id, are rejected at startup and
    any request naming them is answered with an explicit error.
    """

    def __init__(self, model, tokenizer, vocab_tokens, model_name="model", device="cpu"):
        self.model = model.to(device).eval()
        self.tokenizer = tokenizer
        self.model_name = model_name
        self.device = device
        self.has_nsp = hasattr(self.model, "cls") and hasattr(
            getattr(self.model, "cls"), "seq_relationship"
        )
        self._lock = threading.Lock()

        # Fail at load time, not mid-request: every id the tokenizer can
        # emit must have a row in the embedding table.
        max_token_id = max(tokenizer.get_vocab().values())
        num_embeddings = self.model.get_input_embeddings().num_embeddings
        if max_token_id >= num_embeddings:
            raise ValueError(
                f"tokenizer emits ids up to {max_token_id} but the model has "
                f"only {num_embeddings} embedding rows; tokenizer and model "
                "do not belong together"
            )

        self.candidate_ids: dict[str, int] = {}
        self.rejected: dict[str, str] = {}
        used_ids: set[int] = set()
        for token in vocab_tokens:
            ids = tokenizer(token, add_special_tokens=False)["input_ids"]
            if len(ids) != 1:
                self.rejected[token] = f"splits into {len(ids)} subwords"
                continue
            if ids[0] == tokenizer.unk_token_id:
                self.rejected[token] = "maps to the unknown token"
                continue
            if ids[0] in used_ids:
                self.rejected[token] = "collides with an earlier candidate"
                continue
            used_ids.add(ids[0])
            self.candidate_ids[token] = ids[0]
        if self.rejected:
            logger.warning(
                "%d of %d candidates rejected at startup",
                len(self.rejected), len(self.rejected) + len(self.candidate_ids),
            )

    @classmethod
    def from_pretrained(cls, model_name: str, vocab_tokens, device: str = "cpu",
                        nsp: bool = True):
        from transformers import AutoModelForMaskedLM, AutoTokenizer, BertForPreTraining

        tokenizer = AutoTokenizer.from_pretrained(model_name)
        if nsp:
            model = BertForPreTraining.from_pretrained(model_name)
        else:
            model = AutoModelForMaskedLM.from_pretrained(model_name)
        return cls(model, tokenizer, vocab_tokens, model_name=model_name, device=device)

    # -- layout ----------------------------------------------------------

    def assemble(self, query: str, context: str | None, mode: str) -> Layout:
        if mode not in MODES:
            raise RequestError(f"unknown mode {mode!r}")
        tok = self.tokenizer
        query = query.replace(CLIENT_MASK, tok.mask_token)
        query_ids = tok(query, add_special_tokens=False)["input_ids"]
        if query_ids.count(tok.mask_token_id) != 1:
            raise RequestError("query must contain exactly one [MASK]")
        if len(query_ids) + 2 > MAX_LENGTH:
            raise RequestError(f"query alone exceeds {MAX_LENGTH} subwords")

        context_ids: list[int] = []
        if context:
            context_ids = tok(context, add_special_tokens=False)["input_ids"]
            context_ids = [i for i in context_ids if i != tok.mask_token_id]

        n_specials = 2 if mode == MODE_ONE_SEGMENT else 3
        budget = MAX_LENGTH - len(query_ids) - n_specials
        context_ids = context_ids[: max(budget, 0)]

        cls_id, sep_id = tok.cls_token_id, tok.sep_token_id
        if not context_ids:
            input_ids = [cls_id, *query_ids, sep_id]
            token_type_ids = [0] * len(input_ids)
        elif mode == MODE_ONE_SEGMENT:
            input_ids = [cls_id, *query_ids, *context_ids, sep_id]
            token_type_ids = [0] * len(input_ids)
        else:
            input_ids = [cls_id, *query_ids, sep_id, *context_ids, sep_id]
            first_len = len(query_ids) + 2
            if mode == MODE_TWO_SEGMENT:
                token_type_ids = [0] * first_len + [1] * (len(input_ids) - first_len)
            else:
                token_type_ids = [0] * len(input_ids)

        return Layout(
            input_ids=input_ids,
            token_type_ids=token_type_ids,
            mask_index=input_ids.index(tok.mask_token_id),
        )

    def tokens_of(self, layout: Layout) -> list[str]:
        return self.tokenizer.convert_ids_to_tokens(layout.input_ids)

    # -- scoring ---------------------------------------------------------

    def resolve_candidates(self, candidates: list[str]) -> list[int]:
        unknown = [c for c in candidates if c not in self.candidate_ids]
        if unknown:
            rejected = [c for c in unknown if c in self.rejected]
            if rejected:
                reasons = "; ".join(f"{c}: {self.rejected[c]}" for c in rejected[:5])
                raise RequestError(f"candidates rejected at startup: {reasons}")
            raise RequestError(f"candidates not in the unified vocabulary: {unknown[:5]}")
        return [self.candidate_ids[c] for c in candidates]

    def score(self, query: str, context: str | None, mode: str,
              candidates: list[str], top_k: int) -> dict:
        if not candidates:
            raise RequestError("candidates must be non-empty")
        if top_k < 1:
            raise RequestError("top_k must be >= 1")
        candidate_ids = self.resolve_candidates(candidates)
        layout = self.assemble(query, context, mode)

        input_ids = torch.tensor([layout.input_ids], device=self.device)
        token_type_ids = torch.tensor([layout.token_type_ids], device=self.device)
        with self._lock, torch.no_grad():
            output = self.model(input_ids=input_ids, token_type_ids=token_type_ids)

        mlm_logits = (
            output.prediction_logits if hasattr(output, "prediction_logits") else output.logits
        )
        mask_logits = mlm_logits[0, layout.mask_index]
        candidate_logits = mask_logits[torch.tensor(candidate_ids, device=self.device)]
        logprobs = torch.log_softmax(candidate_logits.double(), dim=-1).tolist()

        order = sorted(range(len(candidates)), key=lambda i: (-logprobs[i], i))
        ranked = [
            {"token": candidates[i], "logprob": logprobs[i]} for i in order[:top_k]
        ]

        nsp_prob = None
        if context and self.has_nsp and hasattr(output, "seq_relationship_logits"):
            # Index 0 of the NSP head is the "is next sentence" class.
            probs = torch.softmax(output.seq_relationship_logits[0].double(), dim=-1)
            nsp_prob = float(probs[0])

        return {
            "candidate_logprobs": logprobs,
            "top_k": ranked,
            "nsp_prob": nsp_prob,
        }
