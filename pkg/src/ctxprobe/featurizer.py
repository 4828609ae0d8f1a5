"""Query/context assembly: special markers, segment ids, 512-token budget.

The reference tokenizer is whitespace + punctuation only; real subword
tokenization belongs to scorers. The layout rules here are normative for
the wire protocol, so a remote service must reproduce the same structure
at subword level:

  two_segment     [CLS] q [SEP] c [SEP]   segment ids 0 ... 0 | 1 ... 1
  one_segment     [CLS] q c [SEP]         all segment ids 0
  separator_only  [CLS] q [SEP] c [SEP]   all segment ids 0

The context is truncated from its tail until the total length fits in 512
tokens; the query is never truncated, so the mask position always
survives.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import QueryTooLongError
from .textnorm import MASK_TOKEN

CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"
MAX_TOKENS = 512

MODE_TWO_SEGMENT = "two_segment"
MODE_ONE_SEGMENT = "one_segment"
MODE_SEPARATOR_ONLY = "separator_only"
MODES = (MODE_TWO_SEGMENT, MODE_ONE_SEGMENT, MODE_SEPARATOR_ONLY)

_TOKEN_RE = re.compile(r"\[MASK\]|\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Whitespace/punctuation tokenizer; ``[MASK]`` stays a single token."""
    return _TOKEN_RE.findall(text)


@dataclass(frozen=True)
class FeaturizedInput:
    """A token sequence ready for scoring, with provenance."""

    tokens: tuple[str, ...]
    segment_ids: tuple[int, ...]
    mask_index: int
    mode: str
    fact_uuid: str = ""
    strategy: str = ""

    def __post_init__(self):
        assert len(self.tokens) == len(self.segment_ids)


def assemble(
    query_tokens: list[str],
    context_tokens: list[str],
    mode: str,
    fact_uuid: str = "",
    strategy: str = "",
) -> FeaturizedInput:
    """Combine query and context tokens into a featurized input.

    Raises :class:`QueryTooLongError` when ``[CLS] q [SEP]`` alone exceeds
    the budget, and ``ValueError`` for a malformed mask or unknown mode.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if query_tokens.count(MASK_TOKEN) != 1:
        raise ValueError("query must contain exactly one mask token")
    if len(query_tokens) + 2 > MAX_TOKENS:
        raise QueryTooLongError(
            f"query of {len(query_tokens)} tokens cannot fit in {MAX_TOKENS} with specials"
        )

    n_specials = 2 if mode == MODE_ONE_SEGMENT else 3
    budget = MAX_TOKENS - len(query_tokens) - n_specials
    # A stray mask in the context would break the exactly-one-mask invariant.
    context = [t for t in context_tokens if t != MASK_TOKEN][: max(budget, 0)]

    tokens: list[str] = [CLS_TOKEN, *query_tokens]
    if not context:
        tokens.append(SEP_TOKEN)
        segment_ids = [0] * len(tokens)
    elif mode == MODE_ONE_SEGMENT:
        tokens.extend(context)
        tokens.append(SEP_TOKEN)
        segment_ids = [0] * len(tokens)
    else:
        tokens.append(SEP_TOKEN)
        first_segment_len = len(tokens)
        tokens.extend(context)
        tokens.append(SEP_TOKEN)
        if mode == MODE_TWO_SEGMENT:
            segment_ids = [0] * first_segment_len + [1] * (len(tokens) - first_segment_len)
        else:
            segment_ids = [0] * len(tokens)

    return FeaturizedInput(
        tokens=tuple(tokens),
        segment_ids=tuple(segment_ids),
        mask_index=tokens.index(MASK_TOKEN),
        mode=mode,
        fact_uuid=fact_uuid,
        strategy=strategy,
    )
