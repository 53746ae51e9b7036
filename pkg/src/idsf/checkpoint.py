"""Single-file model checkpoint.

Layout (format version 1): an uncompressed zip archive with fixed timestamps
and sorted members, so identical models give identical bytes.

* ``meta.json``: format version, encoder config, variant, seed, BIO
  constraint flag, label schema, vocabulary (id order) and free-form extras.
* ``arrays/<parameter name>.npy``: one float64 array per parameter, in
  numpy's ``.npy`` format.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

from .data import LabelSchema, TokenVocab
from .encoder import EncoderConfig
from .model import JointModel

FORMAT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


class CheckpointError(ValueError):
    pass


def _member(zf: zipfile.ZipFile, name: str, payload: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, payload)


def checkpoint_bytes(model: JointModel, state: dict[str, np.ndarray] | None = None,
                     extra: dict | None = None) -> bytes:
    state = model.state_dict() if state is None else state
    meta = {
        "format_version": FORMAT_VERSION,
        "encoder": model.config.to_dict(),
        "variant": model.variant.value,
        "seed": model.seed,
        "constrain_bio": model.constrain_bio,
        "schema": model.schema.to_dict(),
        "vocab": model.vocab.itos,
        "extra": extra or {},
    }
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        _member(zf, "meta.json", json.dumps(meta, sort_keys=True, ensure_ascii=False, indent=1).encode("utf-8"))
        for name in sorted(state):
            arr = io.BytesIO()
            np.lib.format.write_array(arr, np.ascontiguousarray(state[name], dtype=np.float64),
                                      allow_pickle=False)
            _member(zf, f"arrays/{name}.npy", arr.getvalue())
    return buf.getvalue()


def save_checkpoint(path: str | Path, model: JointModel, state: dict[str, np.ndarray] | None = None,
                    extra: dict | None = None) -> Path:
    """Write ``model`` (or ``state`` on top of its structure) to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(checkpoint_bytes(model, state, extra))
    return path


def read_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json").decode("utf-8"))
            arrays = {}
            for name in zf.namelist():
                if name.startswith("arrays/") and name.endswith(".npy"):
                    with zf.open(name) as fh:
                        arrays[name[len("arrays/"):-len(".npy")]] = np.lib.format.read_array(
                            io.BytesIO(fh.read()), allow_pickle=False)
    except (OSError, KeyError, zipfile.BadZipFile) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {meta.get('format_version')!r}")
    return meta, arrays


def load_checkpoint(path: str | Path) -> JointModel:
    meta, arrays = read_checkpoint(path)
    vocab = TokenVocab()
    for tok in meta["vocab"][3:]:
        vocab.add(tok)
    if vocab.itos != meta["vocab"]:
        raise CheckpointError("vocabulary in checkpoint does not start with the reserved tokens")
    model = JointModel(
        EncoderConfig(**meta["encoder"]),
        LabelSchema.from_dict(meta["schema"]),
        vocab,
        variant=meta["variant"],
        seed=meta["seed"],
        constrain_bio=meta["constrain_bio"],
    )
    model.load_state_dict(arrays)
    return model
