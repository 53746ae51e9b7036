"""Intent-slot attention: soft intent label embedding and slot input composition.

For word vectors c_1..c_n and intent distribution p:

    w     = W p                                   (soft label embedding)
    alpha = softmax_i(w . c_i)  over real words   (c_0 excluded)
    s_i   = alpha_i * w
    v_i   = s_i ++ c_i

Ablations swap one piece each: ``cls_context`` uses w = c_0,
``scaled_slot`` uses s_i = alpha_i * c_i, ``concat_cls`` uses v_i = c_0 ++ c_i,
and ``baseline`` drops the layer entirely (v_i = c_i).
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .init import glorot_uniform


class AttentionVariant(str, Enum):
    FULL = "full"
    CLS_CONTEXT = "cls_context"
    SCALED_SLOT = "scaled_slot"
    CONCAT_CLS = "concat_cls"
    BASELINE = "baseline"

    @property
    def uses_label_matrix(self) -> bool:
        return self in (AttentionVariant.FULL, AttentionVariant.SCALED_SLOT)

    def slot_input_size(self, d_model: int) -> int:
        return d_model if self is AttentionVariant.BASELINE else 2 * d_model


def soft_label_embedding(W: Tensor, p: Tensor) -> Tensor:
    """w = W p for p of shape [k] (gives [d]) or [B, k] (gives [B, d])."""
    if p.shape[-1] != W.shape[1]:
        raise ShapeError(f"label matrix {W.shape} cannot weight a distribution of shape {p.shape}")
    if p.ndim == 1:
        return ad.matmul(W, p)
    return ad.matmul(p, ad.transpose(W))


def attention_weights(w: Tensor, c: Tensor, pad_mask=None) -> Tensor:
    """alpha over word positions; ``pad_mask`` is True on real words.

    Unbatched: w [d], c [n, d]. Batched: w [B, d], c [B, n, d], mask [B, n].
    """
    if w.ndim == 1:
        scores = ad.matmul(c, w)
    else:
        B, d = w.shape
        scores = ad.reshape(ad.matmul(c, ad.reshape(w, (B, d, 1))), c.shape[:-1])
    return ad.softmax(scores, mask=pad_mask)


def intent_specific_vectors(alpha: Tensor, w: Tensor) -> Tensor:
    """Row i is alpha_i * w."""
    return ad.mul(ad.reshape(alpha, alpha.shape + (1,)), _expand_rows(w, alpha.ndim))


def _expand_rows(x: Tensor, alpha_ndim: int) -> Tensor:
    # [d] broadcasts as is; [B, d] needs a word axis to line up with [B, n, 1]
    return x if alpha_ndim == 1 else ad.reshape(x, (x.shape[0], 1, x.shape[1]))


class IntentSlotAttention:
    """Holds the label matrix W [d, k] when the variant needs it."""

    def __init__(self, variant: AttentionVariant | str, d_model: int, num_intents: int,
                 rng: np.random.Generator):
        self.variant = AttentionVariant(variant)
        self.d_model = d_model
        self.label_matrix: Tensor | None = None
        if self.variant.uses_label_matrix:
            self.label_matrix = Tensor(glorot_uniform(rng, d_model, num_intents), requires_grad=True)

    def parameters(self) -> dict[str, Tensor]:
        return {} if self.label_matrix is None else {"label_matrix": self.label_matrix}

    def __call__(self, c0: Tensor, words: Tensor, p: Tensor, pad_mask=None) -> Tensor:
        return compose_slot_inputs(self.variant, c0, words, p, self.label_matrix, pad_mask)


def compose_slot_inputs(variant: AttentionVariant | str, c0: Tensor, words: Tensor, p: Tensor,
                        W: Tensor | None, pad_mask=None) -> Tensor:
    """Slot-layer inputs v for word vectors ``words`` ([n, d] or [B, n, d])."""
    variant = AttentionVariant(variant)
    if variant is AttentionVariant.BASELINE:
        return words
    if variant is AttentionVariant.CONCAT_CLS:
        lead = ad.broadcast_to(_expand_rows(c0, words.ndim - 1), words.shape)
        return ad.concat([lead, words], axis=-1)
    w = c0 if variant is AttentionVariant.CLS_CONTEXT else soft_label_embedding(W, p)
    alpha = attention_weights(w, words, pad_mask)
    if variant is AttentionVariant.SCALED_SLOT:
        s = ad.mul(ad.reshape(alpha, alpha.shape + (1,)), words)
    else:
        s = intent_specific_vectors(alpha, w)
    return ad.concat([s, words], axis=-1)
