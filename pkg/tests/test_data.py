import numpy as np
import pytest

from idsf.data import (
    CorpusSplits,
    DataError,
    LabelSchema,
    TokenVocab,
    Utterance,
    build_schema,
    count_slots,
    load_corpus,
    load_split,
    make_batches,
    validate_bio,
    write_corpus,
    write_split,
)
from idsf.synthetic import generate_corpus


def write_files(d, seq_in, seq_out, label):
    d.mkdir(parents=True, exist_ok=True)
    (d / "seq.in").write_text(seq_in, encoding="utf-8")
    (d / "seq.out").write_text(seq_out, encoding="utf-8")
    (d / "label").write_text(label, encoding="utf-8")


class TestLoadSplit:
    def test_one_line(self, tmp_path):
        write_files(tmp_path, "a b\n", "O B-x\n", "flight\n")
        (u,) = load_split(tmp_path)
        assert u == Utterance(("a", "b"), "flight", ("O", "B-x"))
        assert len(u) == 2

    def test_token_tag_mismatch_names_line(self, tmp_path):
        write_files(tmp_path, "a b\n", "O\n", "flight\n")
        with pytest.raises(DataError, match=r"seq.out:1: 2 tokens vs 1 tag"):
            load_split(tmp_path)

    def test_mismatch_on_later_line(self, tmp_path):
        write_files(tmp_path, "a\nb c\n", "O\nO\n", "f\nf\n")
        with pytest.raises(DataError, match=r":2:"):
            load_split(tmp_path)

    def test_missing_file(self, tmp_path):
        (tmp_path / "seq.in").write_text("a\n")
        with pytest.raises(DataError, match="missing file"):
            load_split(tmp_path)

    def test_line_count_mismatch(self, tmp_path):
        write_files(tmp_path, "a\nb\n", "O\n", "f\nf\n")
        with pytest.raises(DataError, match="line counts differ"):
            load_split(tmp_path)

    def test_empty_line(self, tmp_path):
        write_files(tmp_path, "a\n\n", "O\nO\n", "f\nf\n")
        with pytest.raises(DataError, match=r"seq.in:2: empty line"):
            load_split(tmp_path)

    def test_no_trailing_newline_accepted(self, tmp_path):
        write_files(tmp_path, "a b", "O B-x", "flight")
        assert len(load_split(tmp_path)) == 1

    def test_roundtrip_bit_exact(self, tmp_path):
        src = tmp_path / "src"
        write_files(src, "chuyến bay nào\nvé đi huế\n", "O O O\nO O B-toloc\n", "flight\nairfare\n")
        write_split(tmp_path / "out", load_split(src))
        for name in ("seq.in", "seq.out", "label"):
            assert (tmp_path / "out" / name).read_bytes() == (src / name).read_bytes()


class TestCorpus:
    def test_roundtrip(self, tmp_path):
        splits = generate_corpus(10, 4, 4, seed=1)
        write_corpus(tmp_path, splits)
        back = load_corpus(tmp_path)
        assert back.train == splits.train and back.valid == splits.valid and back.test == splits.test

    def test_missing_test_optional(self, tmp_path):
        splits = generate_corpus(3, 2, 0, seed=1)
        write_split(tmp_path / "train", splits.train)
        write_split(tmp_path / "dev", splits.valid)
        assert load_corpus(tmp_path).test == []
        with pytest.raises(DataError):
            load_corpus(tmp_path, require_test=True)

    def test_synthetic_gold_is_valid_bio(self):
        for u in generate_corpus(50, 20, 20, seed=0).all():
            assert validate_bio(u.tags) == []


@pytest.mark.parametrize("tags,bad", [
    (["O", "B-x", "I-x"], []),
    (["I-x"], [0]),
    (["B-x", "I-y"], [1]),
    (["O", "I-x", "I-x"], [1]),
    (["B-x", "I-x", "I-x", "O", "B-y"], []),
])
def test_validate_bio(tags, bad):
    assert validate_bio(tags) == bad


class TestSchema:
    def test_single_tag(self):
        s = build_schema([Utterance(("a",), "f", ("B-x",))])
        assert s.slot_types == ("x",)
        assert s.bio_tags == ("O", "B-x", "I-x")

    def test_union_sorted(self):
        s = build_schema([Utterance(("a",), "b", ("O",))], [Utterance(("a",), "a", ("O",))])
        assert s.intents == ("a", "b")

    def test_unknown_label(self):
        s = LabelSchema(("a",), ("x",))
        with pytest.raises(DataError):
            s.intent_id("zz")
        with pytest.raises(DataError):
            s.tag_ids(["B-q"])

    def test_bad_tag(self):
        with pytest.raises(DataError):
            build_schema([Utterance(("a",), "f", ("X-x",))])

    def test_dict_roundtrip(self):
        s = LabelSchema(("a", "b"), ("x", "y"))
        assert LabelSchema.from_dict(s.to_dict()) == s


def test_count_slots_multi_token_counts_once():
    u = Utterance(("a", "b", "c"), "f", ("B-x", "I-x", "B-y"))
    assert count_slots([u]) == 2


class TestBatches:
    def setup_method(self):
        words = ["a", "b", "c", "d", "e"]
        self.utts = [Utterance(tuple(words[: i + 1]), "f", ("O",) * (i + 1)) for i in range(5)]
        self.vocab = TokenVocab.from_utterances(self.utts)
        self.schema = build_schema(self.utts)

    def test_sizes(self):
        batches = make_batches(self.utts, 2, vocab=self.vocab)
        assert [len(b) for b in batches] == [2, 2, 1]

    def test_mask_sums(self):
        for b in make_batches(self.utts, 2, seed=3, vocab=self.vocab, schema=self.schema):
            assert b.word_mask.sum(axis=1).tolist() == [len(u) for u in b.utterances]
            assert b.token_ids.shape[1] == max(len(u) for u in b.utterances) + 1
            assert np.all(b.token_ids[:, 0] == self.vocab.cls_id)
            assert np.all(b.token_ids[~b.mask] == self.vocab.pad_id)

    def test_seeded_order(self):
        a = [u.tokens for b in make_batches(self.utts, 2, seed=7, vocab=self.vocab) for u in b.utterances]
        b = [u.tokens for b in make_batches(self.utts, 2, seed=7, vocab=self.vocab) for u in b.utterances]
        assert a == b
        assert sorted(a) == sorted(u.tokens for u in self.utts)

    def test_bad_batch_size(self):
        with pytest.raises(ValueError):
            make_batches(self.utts, 0, vocab=self.vocab)


def test_utterance_validation():
    with pytest.raises(DataError):
        Utterance(("a", "b"), "f", ("O",))


def test_corpus_all():
    s = CorpusSplits([1], [2], [3])
    assert s.all() == [1, 2, 3]
