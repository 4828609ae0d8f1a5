"""Tokenization and segmented input assembly under the 512-token budget."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctxprobe import featurizer
from ctxprobe.errors import QueryTooLongError
from ctxprobe.featurizer import (
    CLS_TOKEN,
    MAX_TOKENS,
    MODE_ONE_SEGMENT,
    MODE_SEPARATOR_ONLY,
    MODE_TWO_SEGMENT,
    SEP_TOKEN,
    assemble,
    tokenize,
)


class TestTokenize:
    def test_punctuation_split(self):
        assert tokenize("Paris, France.") == ["Paris", ",", "France", "."]

    def test_mask_preserved(self):
        assert tokenize("X is [MASK] .") == ["X", "is", "[MASK]", "."]

    def test_empty(self):
        assert tokenize("") == []

    def test_each_punctuation_char_is_a_token(self):
        assert tokenize("(a-b)") == ["(", "a", "-", "b", ")"]


QUERY = ["The", "capital", "of", "France", "is", "[MASK]", "."]
CONTEXT = ["Paris", "is", "the", "capital", "."]


class TestAssemble:
    def test_two_segment_layout_example(self):
        fi = assemble(QUERY, CONTEXT, MODE_TWO_SEGMENT)
        assert list(fi.tokens) == [
            CLS_TOKEN, "The", "capital", "of", "France", "is", "[MASK]", ".", SEP_TOKEN,
            "Paris", "is", "the", "capital", ".", SEP_TOKEN,
        ]
        assert list(fi.segment_ids) == [0] * 9 + [1] * 6
        assert fi.mask_index == 6

    def test_one_segment_layout(self):
        fi = assemble(QUERY, CONTEXT, MODE_ONE_SEGMENT)
        assert list(fi.tokens) == [CLS_TOKEN, *QUERY, *CONTEXT, SEP_TOKEN]
        assert set(fi.segment_ids) == {0}

    def test_separator_only_layout(self):
        fi = assemble(QUERY, CONTEXT, MODE_SEPARATOR_ONLY)
        assert list(fi.tokens) == [CLS_TOKEN, *QUERY, SEP_TOKEN, *CONTEXT, SEP_TOKEN]
        assert set(fi.segment_ids) == {0}

    def test_truncation_arithmetic(self):
        query = ["tok"] * 299 + ["[MASK]"]
        context = ["ctx"] * 300
        fi = assemble(query, context, MODE_TWO_SEGMENT)
        # 300 query + 209 context + 3 specials = 512.
        assert len(fi.tokens) == MAX_TOKENS
        assert fi.tokens.count("ctx") == 209

    def test_one_segment_truncation_budget(self):
        query = ["tok"] * 299 + ["[MASK]"]
        context = ["ctx"] * 300
        fi = assemble(query, context, MODE_ONE_SEGMENT)
        assert len(fi.tokens) == MAX_TOKENS
        assert fi.tokens.count("ctx") == 210  # one less special than two_segment

    def test_empty_context_reduces_to_query_only(self):
        fi = assemble(QUERY, [], MODE_TWO_SEGMENT)
        assert list(fi.tokens) == [CLS_TOKEN, *QUERY, SEP_TOKEN]
        assert set(fi.segment_ids) == {0}

    def test_empty_context_same_across_modes(self):
        outputs = [assemble(QUERY, [], mode) for mode in featurizer.MODES]
        assert outputs[0].tokens == outputs[1].tokens == outputs[2].tokens

    def test_query_too_long_raises(self):
        query = ["tok"] * 510 + ["[MASK]"]
        with pytest.raises(QueryTooLongError):
            assemble(query, [], MODE_TWO_SEGMENT)

    def test_exactly_fitting_query_ok(self):
        query = ["tok"] * 509 + ["[MASK]"]
        fi = assemble(query, ["ctx"] * 10, MODE_TWO_SEGMENT)
        assert len(fi.tokens) == MAX_TOKENS
        assert fi.tokens.count("ctx") == 0

    def test_no_mask_raises(self):
        with pytest.raises(ValueError):
            assemble(["a", "b"], [], MODE_TWO_SEGMENT)

    def test_two_masks_raise(self):
        with pytest.raises(ValueError):
            assemble(["[MASK]", "[MASK]"], [], MODE_TWO_SEGMENT)

    def test_unknown_mode_raises(self):
        with pytest.raises(ValueError):
            assemble(QUERY, [], "three_segment")

    def test_mask_in_context_is_dropped(self):
        fi = assemble(QUERY, ["[MASK]", "x"], MODE_TWO_SEGMENT)
        assert fi.tokens.count("[MASK]") == 1
        assert fi.tokens[fi.mask_index] == "[MASK]"


token_lists = st.lists(st.sampled_from(["alpha", "beta", "gamma", ",", "."]), max_size=600)


@given(
    query_body=st.lists(st.sampled_from(["a", "b", "c"]), max_size=500),
    mask_pos=st.integers(min_value=0, max_value=500),
    context=token_lists,
    mode=st.sampled_from(featurizer.MODES),
)
def test_assemble_invariants(query_body, mask_pos, context, mode):
    """Budget, single mask, and per-mode segment patterns hold for any input."""
    query = list(query_body)
    query.insert(min(mask_pos, len(query)), "[MASK]")
    if len(query) + 2 > MAX_TOKENS:
        with pytest.raises(QueryTooLongError):
            assemble(query, context, mode)
        return

    fi = assemble(query, context, mode)
    assert len(fi.tokens) <= MAX_TOKENS
    assert fi.tokens.count("[MASK]") == 1
    assert fi.tokens[fi.mask_index] == "[MASK]"
    assert fi.tokens[0] == CLS_TOKEN
    assert fi.tokens[-1] == SEP_TOKEN

    if mode == MODE_TWO_SEGMENT and SEP_TOKEN in fi.tokens[:-1]:
        first_sep = fi.tokens.index(SEP_TOKEN)
        for pos, seg in enumerate(fi.segment_ids):
            assert seg == (0 if pos <= first_sep else 1)
    else:
        assert set(fi.segment_ids) == {0}

    # The query span is identical in every mode.
    assert fi.tokens[1 : len(query) + 1] == tuple(query)
