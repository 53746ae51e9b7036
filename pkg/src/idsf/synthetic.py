"""Small generated ATIS-like corpus for smoke tests and overfitting checks.

Utterances come from per-intent templates with slot placeholders. Each slot
type owns a disjoint set of one- or two-word values, so every gold tag is
recoverable from the token itself and its left neighbour.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .data import CorpusSplits, Utterance

SLOT_VALUES = {
    "fromloc": [["hanoi"], ["da", "nang"], ["hue"]],
    "toloc": [["saigon"], ["vinh"], ["can", "tho"]],
    "date": [["monday"], ["friday"], ["next", "week"]],
    "time": [["noon"], ["ten", "pm"], ["morning"]],
    "airline": [["vietjet"], ["bamboo"], ["pacific", "air"]],
}

TEMPLATES = {
    "flight": [
        "show flights from {fromloc} to {toloc}",
        "flights to {toloc} on {date}",
        "list flights from {fromloc} on {airline}",
    ],
    "airfare": [
        "what is the fare from {fromloc} to {toloc}",
        "fare on {airline} to {toloc}",
        "show the cheapest fare from {fromloc} on {date}",
    ],
    "flight_time": [
        "what time does {airline} leave {fromloc}",
        "what time is the flight at {time} to {toloc}",
        "show departure time from {fromloc} at {time}",
    ],
}


def _fill(template: str, rng: np.random.Generator, kinds: Sequence[str]) -> tuple[list[str], list[str]]:
    tokens, tags = [], []
    for part in template.split():
        if part.startswith("{") and part.endswith("}"):
            kind = part[1:-1]
            if kind not in kinds:
                raise ValueError(f"template uses unknown slot type {kind!r}")
            value = SLOT_VALUES[kind][rng.integers(len(SLOT_VALUES[kind]))]
            tokens += value
            tags += [f"B-{kind}"] + [f"I-{kind}"] * (len(value) - 1)
        else:
            tokens.append(part)
            tags.append("O")
    return tokens, tags


def generate_utterances(n: int, seed: int = 0) -> list[Utterance]:
    """``n`` utterances over 3 intents and 5 slot types, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    intents = sorted(TEMPLATES)
    kinds = list(SLOT_VALUES)
    utterances = []
    for i in range(n):
        intent = intents[i % len(intents)]
        templates = TEMPLATES[intent]
        tokens, tags = _fill(templates[rng.integers(len(templates))], rng, kinds)
        utterances.append(Utterance(tuple(tokens), intent, tuple(tags)))
    return utterances


def generate_corpus(n_train: int = 50, n_valid: int = 20, n_test: int = 20, seed: int = 0) -> CorpusSplits:
    utts = generate_utterances(n_train + n_valid + n_test, seed)
    return CorpusSplits(utts[:n_train], utts[n_train:n_train + n_valid], utts[n_train + n_valid:])


def vocabulary() -> set[str]:
    words = {w for ts in TEMPLATES.values() for t in ts for w in t.split() if not w.startswith("{")}
    return words | {w for vals in SLOT_VALUES.values() for v in vals for w in v}
