"""Small post-LN transformer encoder trained from scratch.

Maps a [CLS]-prefixed id sequence to contextual vectors ``c_0 .. c_n`` of
size ``d_model``. Row 0 feeds the intent head; rows 1..n feed slot filling.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import TokenVocab, tokenize_and_index  # noqa: F401  (re-exported)
from .init import glorot_uniform, normal


class LengthError(ValueError):
    pass


@dataclass
class EncoderConfig:
    vocab_size: int
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    max_len: int = 128
    dropout: float = 0.1
    ffn_mult: int = 4

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    def to_dict(self) -> dict:
        return asdict(self)


class _Layer:
    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        d, f = cfg.d_model, cfg.ffn_mult * cfg.d_model

        def lin(out, inp):
            return (Tensor(glorot_uniform(rng, out, inp), requires_grad=True),
                    Tensor(np.zeros(out), requires_grad=True))

        self.params: dict[str, Tensor] = {}
        for name, (o, i) in {"q": (d, d), "k": (d, d), "v": (d, d), "o": (d, d),
                             "ffn_in": (f, d), "ffn_out": (d, f)}.items():
            w, b = lin(o, i)
            self.params[f"{name}.weight"] = w
            self.params[f"{name}.bias"] = b
        for ln in ("ln_attn", "ln_ffn"):
            self.params[f"{ln}.gamma"] = Tensor(np.ones(d), requires_grad=True)
            self.params[f"{ln}.beta"] = Tensor(np.zeros(d), requires_grad=True)

    def _lin(self, x, name):
        return ad.linear(x, self.params[f"{name}.weight"], self.params[f"{name}.bias"])

    def __call__(self, x: Tensor, key_mask: np.ndarray, cfg: EncoderConfig, rng, train: bool) -> Tensor:
        B, L, d = x.shape
        h = cfg.n_heads
        dh = d // h

        def heads(t):
            return ad.transpose(ad.reshape(t, (B, L, h, dh)), (0, 2, 1, 3))

        q, k, v = (heads(self._lin(x, n)) for n in ("q", "k", "v"))
        scores = ad.mul(ad.matmul(q, ad.transpose(k)), 1.0 / math.sqrt(dh))
        attn = ad.softmax(scores, mask=key_mask[:, None, None, :])
        attn = ad.dropout(attn, cfg.dropout, rng, train)
        ctx = ad.reshape(ad.transpose(ad.matmul(attn, v), (0, 2, 1, 3)), (B, L, d))
        out = ad.dropout(self._lin(ctx, "o"), cfg.dropout, rng, train)
        p = self.params
        x = ad.layer_norm(ad.add(x, out), p["ln_attn.gamma"], p["ln_attn.beta"])
        ff = self._lin(ad.gelu(self._lin(x, "ffn_in")), "ffn_out")
        ff = ad.dropout(ff, cfg.dropout, rng, train)
        return ad.layer_norm(ad.add(x, ff), p["ln_ffn.gamma"], p["ln_ffn.beta"])


class Encoder:
    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        self.cfg = cfg
        d = cfg.d_model
        self.token_embedding = Tensor(normal(rng, cfg.vocab_size, d), requires_grad=True)
        self.position_embedding = Tensor(normal(rng, cfg.max_len, d), requires_grad=True)
        self.ln_gamma = Tensor(np.ones(d), requires_grad=True)
        self.ln_beta = Tensor(np.zeros(d), requires_grad=True)
        self.layers = [_Layer(cfg, rng) for _ in range(cfg.n_layers)]

    def embedding_parameters(self) -> dict[str, Tensor]:
        return {"token": self.token_embedding, "position": self.position_embedding,
                "ln.gamma": self.ln_gamma, "ln.beta": self.ln_beta}

    def layer_parameters(self) -> dict[str, Tensor]:
        return {f"layer{i}.{k}": t for i, layer in enumerate(self.layers) for k, t in layer.params.items()}

    def forward(self, token_ids: np.ndarray, mask: np.ndarray, rng=None, train: bool = False) -> Tensor:
        """Contextual embeddings [B, L, d] for padded ids [B, L] (``mask`` marks real tokens)."""
        token_ids = np.asarray(token_ids, dtype=np.int64)
        B, L = token_ids.shape
        if L > self.cfg.max_len:
            raise LengthError(f"input length {L} exceeds max_len {self.cfg.max_len}")
        x = ad.add(ad.embedding(self.token_embedding, token_ids),
                   ad.embedding(self.position_embedding, np.arange(L)))
        x = ad.layer_norm(x, self.ln_gamma, self.ln_beta)
        x = ad.dropout(x, self.cfg.dropout, rng, train)
        mask = np.asarray(mask, dtype=bool)
        for layer in self.layers:
            x = layer(x, mask, self.cfg, rng, train)
        return x

    def encode(self, token_ids, train_mode: bool = False, rng=None) -> Tensor:
        """Single sequence (already [CLS]-prefixed) to [n+1, d]."""
        ids = np.asarray(token_ids, dtype=np.int64)
        if ids.ndim != 1 or ids.size == 0:
            raise ValueError("encode expects a non-empty 1-D id sequence")
        if ids.size > self.cfg.max_len:
            raise LengthError(f"input length {ids.size} exceeds max_len {self.cfg.max_len}")
        out = self.forward(ids[None, :], np.ones((1, ids.size), dtype=bool), rng, train_mode)
        return ad.reshape(out, out.shape[1:])
