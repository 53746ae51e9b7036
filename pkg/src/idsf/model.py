"""Joint intent detection and slot filling model.

encoder -> intent head on c_0 -> intent-slot attention -> slot emissions -> CRF.
Each component draws its initial weights from its own generator derived from
``(seed, component)``, so two models with the same seed share every common
component bit for bit regardless of variant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .attention import AttentionVariant, IntentSlotAttention
from .autodiff import Tensor
from .crf import CRFParams, SlotHead, crf_nll, viterbi_decode
from .data import Batch, LabelSchema, TokenVocab, Utterance, make_batches
from .encoder import Encoder, EncoderConfig
from .intent import IntentHead

COMPONENT_STREAMS = {"encoder": 0, "intent": 1, "attention": 2, "slot": 3, "dropout": 4}


def component_rng(seed: int, component: str) -> np.random.Generator:
    return np.random.default_rng([seed, COMPONENT_STREAMS[component]])


def joint_loss(l_id: Tensor, l_sf: Tensor, lam: float) -> Tensor:
    """lam * l_id + (1 - lam) * l_sf, with 0 < lam < 1."""
    check_lambda(lam)
    return ad.add(ad.mul(l_id, lam), ad.mul(l_sf, 1.0 - lam))


def check_lambda(lam: float) -> None:
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must be in (0,1), got {lam}")


@dataclass
class ForwardOutput:
    intent_probs: Tensor   # [B, k]
    emissions: Tensor      # [B, N, T]
    word_mask: np.ndarray  # [B, N]


@dataclass
class LossOutput:
    loss: Tensor
    intent_loss: Tensor
    slot_loss: Tensor


class JointModel:
    def __init__(self, encoder_config: EncoderConfig, schema: LabelSchema, vocab: TokenVocab,
                 variant: AttentionVariant | str = AttentionVariant.FULL, seed: int = 0,
                 constrain_bio: bool = False):
        if encoder_config.vocab_size != len(vocab):
            raise ValueError(f"encoder vocab_size {encoder_config.vocab_size} != vocab size {len(vocab)}")
        self.config = encoder_config
        self.schema = schema
        self.vocab = vocab
        self.variant = AttentionVariant(variant)
        self.seed = seed
        self.constrain_bio = constrain_bio
        d, k, T = encoder_config.d_model, schema.num_intents, schema.num_tags
        self.encoder = Encoder(encoder_config, component_rng(seed, "encoder"))
        self.intent_head = IntentHead(d, k, component_rng(seed, "intent"))
        self.attention: IntentSlotAttention | None = None
        if self.variant is not AttentionVariant.BASELINE:
            self.attention = IntentSlotAttention(self.variant, d, k, component_rng(seed, "attention"))
        self.slot_head = SlotHead(self.variant.slot_input_size(d), T, component_rng(seed, "slot"))
        self.crf = CRFParams.zeros(T)
        if constrain_bio:
            self.crf.constrain_bio(list(schema.bio_tags))
        self.dropout_rng = component_rng(seed, "dropout")

    # -- parameters ---------------------------------------------------------

    def parameter_groups(self) -> dict[str, dict[str, Tensor]]:
        groups = {
            "embeddings": self.encoder.embedding_parameters(),
            "encoder": self.encoder.layer_parameters(),
            "intent": self.intent_head.parameters(),
            "attention": self.attention.parameters() if self.attention else {},
            "slot": self.slot_head.parameters(),
            "crf": self.crf.parameters(),
        }
        return {g: ps for g, ps in groups.items() if ps}

    def named_parameters(self) -> dict[str, Tensor]:
        return {f"{g}.{k}": t for g, ps in self.parameter_groups().items() for k, t in ps.items()}

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        if set(state) != set(params):
            missing = sorted(set(params) - set(state))
            extra = sorted(set(state) - set(params))
            raise KeyError(f"state mismatch: missing={missing} unexpected={extra}")
        for k, p in params.items():
            if state[k].shape != p.data.shape:
                raise ValueError(f"{k}: shape {state[k].shape} != {p.data.shape}")
            p.data[...] = state[k]

    # -- forward --------------------------------------------------------------

    def forward(self, batch: Batch, train: bool = False) -> ForwardOutput:
        rng = self.dropout_rng if train else None
        c = self.encoder.forward(batch.token_ids, batch.mask, rng, train)
        c0 = c[:, 0, :]
        words = c[:, 1:, :]
        word_mask = batch.word_mask
        c0_drop = ad.dropout(c0, self.config.dropout, rng, train)
        p = self.intent_head.intent_probs(c0_drop)
        v = words if self.attention is None else self.attention(c0, words, p, word_mask)
        return ForwardOutput(p, self.slot_head.emissions(v), word_mask)

    def loss(self, batch: Batch, lam: float, train: bool = False) -> LossOutput:
        out = self.forward(batch, train)
        l_id = ad.cross_entropy(out.intent_probs, batch.intent_ids)
        l_sf = ad.mean(crf_nll(out.emissions, batch.tag_ids, self.crf, out.word_mask))
        return LossOutput(joint_loss(l_id, l_sf, lam), l_id, l_sf)

    def decode(self, out: ForwardOutput) -> list[tuple[int, list[int]]]:
        intents = np.argmax(out.intent_probs.data, axis=-1)
        lengths = out.word_mask.sum(axis=1)
        return [(int(intents[b]), viterbi_decode(out.emissions.data[b, : lengths[b]], self.crf)[0])
                for b in range(len(lengths))]

    def predict(self, utterances: Sequence[Utterance] | Sequence[Sequence[str]],
                batch_size: int = 64) -> list[tuple[str, list[str]]]:
        """(intent label, BIO tags) for each utterance or raw token list."""
        utts = [u if isinstance(u, Utterance) else Utterance(tuple(u), "", ("O",) * len(u))
                for u in utterances]
        tags = self.schema.bio_tags
        results = []
        for batch in make_batches(utts, batch_size, vocab=self.vocab):
            for intent, path in self.decode(self.forward(batch)):
                results.append((self.schema.intents[intent], [tags[t] for t in path]))
        return results
