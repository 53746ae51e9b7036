"""Corpus I/O in the three-file split layout, label schema, BIO checks, batching.

A split directory holds ``seq.in`` (space-separated tokens), ``seq.out``
(space-separated BIO tags) and ``label`` (one intent per line), all UTF-8 with
one utterance per line. Writing always terminates every line with ``\\n``, so
loading and re-writing a file that already ends in a newline is bit-exact.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

SPLIT_DIRS = ("train", "dev", "test")
FILES = ("seq.in", "seq.out", "label")

PAD, UNK, CLS = "[PAD]", "[UNK]", "[CLS]"


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Utterance:
    tokens: tuple[str, ...]
    intent: str
    tags: tuple[str, ...]

    def __post_init__(self):
        if not self.tokens:
            raise DataError("utterance has no tokens")
        if len(self.tokens) != len(self.tags):
            raise DataError(f"{len(self.tokens)} tokens vs {len(self.tags)} tags")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class CorpusSplits:
    train: list[Utterance]
    valid: list[Utterance]
    test: list[Utterance] = field(default_factory=list)

    def all(self) -> list[Utterance]:
        return [*self.train, *self.valid, *self.test]


@dataclass(frozen=True)
class LabelSchema:
    intents: tuple[str, ...]
    slot_types: tuple[str, ...]

    @property
    def bio_tags(self) -> tuple[str, ...]:
        tags = ["O"]
        for kind in self.slot_types:
            tags += [f"B-{kind}", f"I-{kind}"]
        return tuple(tags)

    @property
    def num_intents(self) -> int:
        return len(self.intents)

    @property
    def num_tags(self) -> int:
        return 2 * len(self.slot_types) + 1

    def intent_id(self, label: str) -> int:
        try:
            return self.intents.index(label)
        except ValueError:
            raise DataError(f"intent {label!r} is not in the schema") from None

    def tag_ids(self, tags: Sequence[str]) -> list[int]:
        lookup = {t: i for i, t in enumerate(self.bio_tags)}
        try:
            return [lookup[t] for t in tags]
        except KeyError as exc:
            raise DataError(f"tag {exc.args[0]!r} is not in the schema") from None

    def to_dict(self) -> dict:
        return {"intents": list(self.intents), "slot_types": list(self.slot_types)}

    @classmethod
    def from_dict(cls, d: dict) -> LabelSchema:
        return cls(tuple(d["intents"]), tuple(d["slot_types"]))


def _read_lines(path: Path) -> list[str]:
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    text = path.read_bytes().decode("utf-8")
    if not text:
        return []
    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()
    return lines


def load_split(path: str | Path) -> list[Utterance]:
    """Read one split directory into utterances, validating alignment line by line."""
    path = Path(path)
    seq_in, seq_out, labels = (_read_lines(path / name) for name in FILES)
    counts = {name: len(lines) for name, lines in zip(FILES, (seq_in, seq_out, labels))}
    if len(set(counts.values())) != 1:
        raise DataError(f"{path}: line counts differ: {counts}")
    utterances = []
    for i, (words, tags, intent) in enumerate(zip(seq_in, seq_out, labels), start=1):
        for name, line in zip(FILES, (words, tags, intent)):
            if not line.strip():
                raise DataError(f"{path / name}:{i}: empty line")
        toks, tgs = words.split(" "), tags.split(" ")
        if "" in toks or "" in tgs:
            raise DataError(f"{path / FILES[0]}:{i}: tokens must be separated by single spaces")
        if len(toks) != len(tgs):
            raise DataError(f"{path / FILES[1]}:{i}: {len(toks)} tokens vs {len(tgs)} tags")
        utterances.append(Utterance(tuple(toks), intent, tuple(tgs)))
    return utterances


def write_split(path: str | Path, utterances: Sequence[Utterance]) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    columns = (
        [" ".join(u.tokens) for u in utterances],
        [" ".join(u.tags) for u in utterances],
        [u.intent for u in utterances],
    )
    for name, lines in zip(FILES, columns):
        (path / name).write_bytes("".join(line + "\n" for line in lines).encode("utf-8"))


def load_corpus(data_dir: str | Path, require_test: bool = False) -> CorpusSplits:
    """Load ``train/``, ``dev/`` and (when present) ``test/`` under ``data_dir``."""
    data_dir = Path(data_dir)
    train = load_split(data_dir / "train")
    valid = load_split(data_dir / "dev")
    test_dir = data_dir / "test"
    if test_dir.is_dir():
        test = load_split(test_dir)
    elif require_test:
        raise DataError(f"missing split directory: {test_dir}")
    else:
        test = []
    return CorpusSplits(train, valid, test)


def write_corpus(data_dir: str | Path, splits: CorpusSplits) -> None:
    data_dir = Path(data_dir)
    for name, utts in zip(SPLIT_DIRS, (splits.train, splits.valid, splits.test)):
        write_split(data_dir / name, utts)


def validate_bio(tags: Sequence[str]) -> list[int]:
    """Positions of I-x tags not preceded by B-x or I-x of the same type."""
    bad = []
    prev = "O"
    for i, tag in enumerate(tags):
        if tag.startswith("I-") and (prev == "O" or prev[2:] != tag[2:]):
            bad.append(i)
        prev = tag
    return bad


def build_schema(*splits: Sequence[Utterance]) -> LabelSchema:
    intents, kinds = set(), set()
    for split in splits:
        for u in split:
            intents.add(u.intent)
            for tag in u.tags:
                if tag == "O":
                    continue
                if tag[:2] not in ("B-", "I-") or len(tag) < 3:
                    raise DataError(f"not a BIO tag: {tag!r}")
                kinds.add(tag[2:])
    return LabelSchema(tuple(sorted(intents)), tuple(sorted(kinds)))


def count_slots(utterances: Sequence[Utterance]) -> int:
    """Number of gold slot spans (a multi-token slot counts once)."""
    from .evaluation import extract_spans

    return sum(len(extract_spans(u.tags)) for u in utterances)


class TokenVocab:
    """Token to id map with reserved ids 0/1/2 for [PAD], [UNK], [CLS]."""

    def __init__(self, tokens: Sequence[str] = ()):
        self.itos: list[str] = [PAD, UNK, CLS]
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        for tok in tokens:
            self.add(tok)

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    @classmethod
    def from_utterances(cls, utterances: Sequence[Utterance]) -> TokenVocab:
        return cls(sorted({t for u in utterances for t in u.tokens}))

    @property
    def pad_id(self) -> int:
        return self.stoi[PAD]

    @property
    def unk_id(self) -> int:
        return self.stoi[UNK]

    @property
    def cls_id(self) -> int:
        return self.stoi[CLS]

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def id(self, token: str) -> int:
        return self.stoi.get(token, self.unk_id)


def tokenize_and_index(tokens: Sequence[str], vocab: TokenVocab) -> list[int]:
    """[CLS] id followed by one id per token; unknown tokens map to [UNK]."""
    if not tokens:
        raise DataError("empty utterance")
    for tok in tokens:
        if not tok or any(ch.isspace() for ch in tok):
            raise DataError(f"invalid token {tok!r}")
    return [vocab.cls_id] + [vocab.id(t) for t in tokens]


@dataclass
class Batch:
    """Padded batch. Column 0 of ``token_ids`` is [CLS]; ``tag_ids`` covers words only."""

    utterances: list[Utterance]
    token_ids: np.ndarray    # [B, N+1]
    mask: np.ndarray         # [B, N+1], True on real positions including [CLS]
    tag_ids: np.ndarray      # [B, N], 0 on padding
    intent_ids: np.ndarray   # [B]

    @property
    def word_mask(self) -> np.ndarray:
        return self.mask[:, 1:]

    def __len__(self) -> int:
        return len(self.utterances)


def encode_batch(utterances: Sequence[Utterance], vocab: TokenVocab,
                 schema: LabelSchema | None = None) -> Batch:
    B = len(utterances)
    N = max(len(u) for u in utterances)
    ids = np.full((B, N + 1), vocab.pad_id, dtype=np.int64)
    mask = np.zeros((B, N + 1), dtype=bool)
    tags = np.zeros((B, N), dtype=np.int64)
    intents = np.zeros(B, dtype=np.int64)
    for b, u in enumerate(utterances):
        row = tokenize_and_index(u.tokens, vocab)
        ids[b, : len(row)] = row
        mask[b, : len(row)] = True
        if schema is not None:
            tags[b, : len(u)] = schema.tag_ids(u.tags)
            intents[b] = schema.intent_id(u.intent)
    return Batch(list(utterances), ids, mask, tags, intents)


def make_batches(utterances: Sequence[Utterance], batch_size: int, seed=None, *,
                 vocab: TokenVocab, schema: LabelSchema | None = None) -> list[Batch]:
    """Split into padded batches; shuffled with ``seed`` (int or Generator) if given."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.arange(len(utterances))
    if seed is not None:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        order = rng.permutation(len(utterances))
    return [encode_batch([utterances[i] for i in order[s : s + batch_size]], vocab, schema)
            for s in range(0, len(order), batch_size)]
