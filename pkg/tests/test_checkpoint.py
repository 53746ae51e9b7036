import zipfile

import numpy as np
import pytest

from idsf.checkpoint import CheckpointError, checkpoint_bytes, load_checkpoint, read_checkpoint, save_checkpoint

from conftest import tiny_model


@pytest.mark.parametrize("variant", ["full", "baseline", "concat_cls"])
def test_roundtrip_bit_exact(tmp_path, variant, tiny_batch):
    model = tiny_model(variant, seed=5)
    path = save_checkpoint(tmp_path / "m.ckpt", model, extra={"epoch": 3})
    back = load_checkpoint(path)
    assert back.variant == model.variant and back.vocab.itos == model.vocab.itos
    assert back.schema == model.schema
    for k, v in model.state_dict().items():
        assert np.array_equal(back.state_dict()[k], v)
    assert checkpoint_bytes(back, extra={"epoch": 3}) == path.read_bytes()
    assert np.array_equal(back.forward(tiny_batch).emissions.data, model.forward(tiny_batch).emissions.data)


def test_bytes_are_deterministic():
    assert checkpoint_bytes(tiny_model(seed=1)) == checkpoint_bytes(tiny_model(seed=1))
    assert checkpoint_bytes(tiny_model(seed=1)) != checkpoint_bytes(tiny_model(seed=2))


def test_layout(tmp_path):
    path = save_checkpoint(tmp_path / "m.ckpt", tiny_model())
    with zipfile.ZipFile(path) as zf:
        names = zf.namelist()
    assert names[0] == "meta.json"
    assert names[1:] == sorted(names[1:]) and all(n.startswith("arrays/") for n in names[1:])
    meta, arrays = read_checkpoint(path)
    assert meta["format_version"] == 1 and all(a.dtype == np.float64 for a in arrays.values())


def test_garbage_rejected(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a zip")
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)
