"""Slot emission layer and linear-chain CRF (forward algorithm, NLL, Viterbi).

Scores of a tag path ``y`` over ``n`` tokens::

    start[y0] + e[0, y0] + sum_t (trans[y_{t-1}, y_t] + e[t, y_t]) + end[y_{n-1}]

The log-partition is a single autodiff op whose backward pass uses the
forward-backward marginals; the gold path score is built from ordinary
gather ops, so the NLL gradient is exact without differentiating through the
recursion step by step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import autodiff as ad
from .autodiff import Tensor
from .init import glorot_uniform

BIO_PENALTY = -1e4


class SlotHead:
    """FFNN_SF: one affine map from slot input vectors to BIO tag scores."""

    def __init__(self, d_slot: int, num_tags: int, rng: np.random.Generator):
        self.weight = Tensor(glorot_uniform(rng, num_tags, d_slot), requires_grad=True)
        self.bias = Tensor(np.zeros(num_tags), requires_grad=True)

    @property
    def num_tags(self) -> int:
        return self.weight.shape[0]

    def parameters(self) -> dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}

    def emissions(self, v: Tensor) -> Tensor:
        return ad.linear(v, self.weight, self.bias)


@dataclass
class CRFParams:
    transitions: Tensor
    start_scores: Tensor
    end_scores: Tensor
    # constant additive penalties (zero unless BIO constraints are on)
    transition_penalty: np.ndarray | None = None
    start_penalty: np.ndarray | None = None

    @classmethod
    def zeros(cls, num_tags: int) -> CRFParams:
        return cls(
            Tensor(np.zeros((num_tags, num_tags)), requires_grad=True),
            Tensor(np.zeros(num_tags), requires_grad=True),
            Tensor(np.zeros(num_tags), requires_grad=True),
        )

    @property
    def num_tags(self) -> int:
        return self.transitions.shape[0]

    def parameters(self) -> dict[str, Tensor]:
        return {"transitions": self.transitions, "start": self.start_scores, "end": self.end_scores}

    def constrain_bio(self, bio_tags: list[str]) -> None:
        """Forbid O->I-x, B-x/I-x->I-y (y != x) and starting on I-x."""
        T = len(bio_tags)
        if T != self.num_tags:
            raise ValueError(f"{T} tag names for a {self.num_tags}-tag CRF")
        trans = np.zeros((T, T))
        start = np.zeros(T)
        for j, tag in enumerate(bio_tags):
            if not tag.startswith("I-"):
                continue
            kind = tag[2:]
            start[j] = BIO_PENALTY
            for i, prev in enumerate(bio_tags):
                if prev == "O" or prev[2:] != kind:
                    trans[i, j] = BIO_PENALTY
        self.transition_penalty = trans
        self.start_penalty = start

    def effective(self) -> tuple[Tensor, Tensor, Tensor]:
        trans, start = self.transitions, self.start_scores
        if self.transition_penalty is not None:
            trans = ad.add(trans, self.transition_penalty)
        if self.start_penalty is not None:
            start = ad.add(start, self.start_penalty)
        return trans, start, self.end_scores


def _batched(emissions: Tensor, mask) -> tuple[Tensor, np.ndarray, bool]:
    if emissions.ndim == 2:
        n = emissions.shape[0]
        if n < 1:
            raise ValueError("CRF needs at least one token")
        return ad.reshape(emissions, (1,) + emissions.shape), np.ones((1, n), dtype=bool), True
    if mask is None:
        mask = np.ones(emissions.shape[:2], dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if not mask[:, 0].all():
        raise ValueError("every sequence needs at least one real token")
    return emissions, mask, False


def _forward_backward(e, trans, start, end, mask):
    """Log-space alphas, betas and log Z for a padded batch [B, N, T]."""
    B, N, T = e.shape
    alpha = np.empty((B, N, T))
    alpha[:, 0] = start + e[:, 0]
    for t in range(1, N):
        nxt = logsumexp(alpha[:, t - 1, :, None] + trans[None], axis=1) + e[:, t]
        alpha[:, t] = np.where(mask[:, t, None], nxt, alpha[:, t - 1])
    log_z = logsumexp(alpha[:, -1] + end, axis=1)
    beta = np.empty((B, N, T))
    beta[:, -1] = end
    for t in range(N - 2, -1, -1):
        inner = logsumexp(trans[None] + (e[:, t + 1] + beta[:, t + 1])[:, None, :], axis=2)
        beta[:, t] = np.where(mask[:, t + 1, None], inner, end)
    return alpha, beta, log_z


def _log_partition_op(e: Tensor, trans: Tensor, start: Tensor, end: Tensor, mask: np.ndarray) -> Tensor:
    alpha, beta, log_z = _forward_backward(e.data, trans.data, start.data, end.data, mask)
    lengths = mask.sum(axis=1)

    def bw(g):
        # g has shape [B]
        gz = g[:, None, None]
        unary = np.exp(alpha + beta - log_z[:, None, None]) * mask[:, :, None]
        g_e = unary * gz
        g_start = (unary[:, 0] * g[:, None]).sum(axis=0)
        last = unary[np.arange(len(lengths)), lengths - 1]
        g_end = (last * g[:, None]).sum(axis=0)
        g_trans = np.zeros_like(trans.data)
        for t in range(1, e.shape[1]):
            w = (mask[:, t] * g)[:, None, None]
            pair = np.exp(alpha[:, t - 1, :, None] + trans.data[None]
                          + (e.data[:, t] + beta[:, t])[:, None, :] - log_z[:, None, None])
            g_trans += (pair * w).sum(axis=0)
        return g_e, g_trans, g_start, g_end

    return ad._node(log_z, (e, trans, start, end), bw, "crf_log_partition")


def crf_log_partition(emissions: Tensor, params: CRFParams, mask=None) -> Tensor:
    """log of the summed exp-scores over all tag paths.

    ``emissions`` [n, T] gives a scalar; a padded batch [B, N, T] with a
    boolean ``mask`` [B, N] (real tokens as a prefix) gives a vector [B].
    """
    e, m, single = _batched(emissions, mask)
    trans, start, end = params.effective()
    out = _log_partition_op(e, trans, start, end, m)
    return ad.reshape(out, ()) if single else out


def crf_path_score(emissions: Tensor, tags, params: CRFParams, mask=None) -> Tensor:
    """Differentiable score of the given tag path(s)."""
    e, m, single = _batched(emissions, mask)
    B, N, T = e.shape
    tags = np.asarray(tags, dtype=np.int64).reshape(B, -1)
    if tags.shape[1] != N:
        raise ValueError(f"{tags.shape[1]} gold tags for {N} tokens")
    tags = np.where(m, tags, 0)
    if np.any(tags < 0) or np.any(tags >= T):
        raise IndexError(f"tag id out of range [0, {T})")
    trans, start, end = params.effective()
    fm = m.astype(np.float64)
    rows = np.arange(B)[:, None]
    cols = np.arange(N)[None, :]
    emit = ad.tsum(ad.mul(e[rows, cols, tags], fm), axis=1)
    score = ad.add(emit, start[tags[:, 0]])
    if N > 1:
        moves = ad.mul(trans[tags[:, :-1], tags[:, 1:]], fm[:, 1:])
        score = ad.add(score, ad.tsum(moves, axis=1))
    last = tags[np.arange(B), m.sum(axis=1) - 1]
    score = ad.add(score, end[last])
    return ad.reshape(score, ()) if single else score


def crf_nll(emissions: Tensor, gold_tags, params: CRFParams, mask=None) -> Tensor:
    """Negative log-likelihood of the gold path: log Z minus gold path score.

    Scalar for one sequence, per-sequence vector [B] for a padded batch.
    """
    return ad.sub(crf_log_partition(emissions, params, mask),
                  crf_path_score(emissions, gold_tags, params, mask))


def viterbi_decode(emissions, params: CRFParams) -> tuple[list[int], float]:
    """Best tag path for one sequence [n, T] and its score.

    Backtracking takes the lowest tag id among equal-scoring predecessors.
    """
    e = emissions.data if isinstance(emissions, Tensor) else np.asarray(emissions, dtype=np.float64)
    n, T = e.shape
    if n < 1:
        raise ValueError("CRF needs at least one token")
    trans, start, end = (t.data for t in params.effective())
    delta = start + e[0]
    back = np.zeros((n, T), dtype=np.int64)
    cols = np.arange(T)
    for t in range(1, n):
        cand = delta[:, None] + trans
        best = np.argmax(cand, axis=0)
        back[t] = best
        delta = cand[best, cols] + e[t]
    final = delta + end
    tag = int(np.argmax(final))
    score = float(final[tag])
    path = [tag]
    for t in range(n - 1, 0, -1):
        tag = int(back[t, tag])
        path.append(tag)
    path.reverse()
    return path, score
