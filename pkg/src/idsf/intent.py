"""Intent detection head: one affine map over c_0 followed by softmax."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .init import glorot_uniform


class IntentHead:
    def __init__(self, d_model: int, num_intents: int, rng: np.random.Generator):
        self.weight = Tensor(glorot_uniform(rng, num_intents, d_model), requires_grad=True)
        self.bias = Tensor(np.zeros(num_intents), requires_grad=True)

    @property
    def num_intents(self) -> int:
        return self.weight.shape[0]

    def parameters(self) -> dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}

    def logits(self, c0: Tensor) -> Tensor:
        if c0.shape[-1] != self.weight.shape[1]:
            raise ShapeError(f"c0 has size {c0.shape[-1]}, intent head expects {self.weight.shape[1]}")
        return ad.linear(c0, self.weight, self.bias)

    def intent_probs(self, c0: Tensor) -> Tensor:
        """Distribution over intents for c0 of shape [d] or [B, d]."""
        return ad.softmax(self.logits(c0))


def intent_loss(p: Tensor, gold) -> Tensor:
    return ad.cross_entropy(p, gold)


def predict_intent(p) -> int | np.ndarray:
    """Argmax; ``np.argmax`` already returns the lowest index among ties."""
    arr = p.data if isinstance(p, Tensor) else np.asarray(p)
    if arr.ndim == 1:
        return int(np.argmax(arr))
    return np.argmax(arr, axis=-1)
