import numpy as np
import pytest

from idsf.data import LabelSchema, TokenVocab, Utterance, encode_batch
from idsf.encoder import EncoderConfig
from idsf.model import JointModel

_ACCEPTANCE: list[tuple[str, str, str]] = []


def record_criterion(name: str, status: str, detail: str = "") -> None:
    _ACCEPTANCE.append((name, status, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"[{status}] {name}" + (f" :: {detail}" if detail else ""))


TINY_SCHEMA = LabelSchema(("a", "b", "c"), ("x", "y"))  # k = 3, T = 5


def tiny_model(variant="full", seed=0, d_model=8, n_layers=2, n_heads=2, dropout=0.0, max_len=6,
               schema=TINY_SCHEMA, words=("w1", "w2", "w3", "w4")):
    vocab = TokenVocab(words)
    cfg = EncoderConfig(len(vocab), d_model=d_model, n_layers=n_layers, n_heads=n_heads,
                        max_len=max_len, dropout=dropout)
    model = JointModel(cfg, schema, vocab, variant, seed)
    # non-zero CRF scores so their gradients are exercised
    rng = np.random.default_rng(seed + 100)
    for p in model.crf.parameters().values():
        p.data[...] = rng.normal(scale=0.5, size=p.shape)
    return model


@pytest.fixture
def tiny_batch():
    utts = [Utterance(("w1", "w3", "w2"), "b", ("B-x", "I-x", "O"))]
    vocab = TokenVocab(("w1", "w2", "w3", "w4"))
    return encode_batch(utts, vocab, TINY_SCHEMA)


def synthetic_model(splits, seed=0, variant="full", d_model=16, n_layers=1, n_heads=2, dropout=0.0):
    from idsf.data import build_schema

    vocab = TokenVocab.from_utterances(splits.train)
    cfg = EncoderConfig(len(vocab), d_model=d_model, n_layers=n_layers, n_heads=n_heads,
                        max_len=32, dropout=dropout)
    return JointModel(cfg, build_schema(splits.train, splits.valid, splits.test), vocab, variant, seed)
