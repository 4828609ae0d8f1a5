"""A tiny deterministic BERT, built offline, for protocol and layout tests."""

import pytest
import torch
from transformers import BertConfig, BertForPreTraining, BertTokenizerFast

WORDPIECES = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "the", "capital", "of", "france", "italy", "is", "was", "a", "city",
    "paris", "rome", "london", "berlin", "big", "beautiful", "and",
    "in", "born", "he", "she", "works", "field", "astronomy",
    ".", ",", "?", "##ian", "##s",
]


@pytest.fixture(scope="session")
def tiny_tokenizer(tmp_path_factory):
    vocab_dir = tmp_path_factory.mktemp("vocab")
    (vocab_dir / "vocab.txt").write_text("\n".join(WORDPIECES) + "\n")
    return BertTokenizerFast.from_pretrained(str(vocab_dir), do_lower_case=True)


@pytest.fixture(scope="session")
def tiny_model(tiny_tokenizer):
    torch.manual_seed(0)
    config = BertConfig(
        vocab_size=len(WORDPIECES),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=512,
    )
    return BertForPreTraining(config)


CANDIDATES = ["paris", "rome", "london", "berlin", "parisian", "xylophone"]


@pytest.fixture(scope="session")
def session(tiny_model, tiny_tokenizer):
    from ctxprobe_service.model import ModelSession

    return ModelSession(tiny_model, tiny_tokenizer, CANDIDATES, model_name="tiny-test-bert")


@pytest.fixture(scope="session")
def client(session):
    from fastapi.testclient import TestClient

    from ctxprobe_service.app import create_app

    with TestClient(create_app(session=session)) as test_client:
        yield test_client
