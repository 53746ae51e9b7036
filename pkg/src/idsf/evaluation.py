"""Intent accuracy, exact-span slot F1, sentence accuracy and error categories.

Span extraction is conlleval-lenient: an I-x that does not continue an open
x span starts a new one, so predictions with invalid BIO are never rejected.

Error categories, applied per utterance:

* WI: predicted intent differs from gold (one per utterance).
* WL: predicted span matches a gold span exactly but has another type.
* WB: predicted span partially overlaps a gold span. Same-type overlaps are
  the textbook case; overlaps that only touch gold spans of other types are
  also counted here and tallied separately as ``WB_cross_type``.
* SS: predicted span overlaps no gold span.
* MS: gold span overlapped by no predicted span.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

CATEGORIES = ("WI", "MS", "SS", "WB", "WL")


class AlignmentError(ValueError):
    pass


class Span(NamedTuple):
    slot_type: str
    start: int
    end: int  # inclusive

    def overlaps(self, other: Span) -> bool:
        return self.start <= other.end and other.start <= self.end


def extract_spans(tags: Sequence[str]) -> set[Span]:
    spans: set[Span] = set()
    kind, start = None, 0
    for i, tag in enumerate(tags):
        if tag.startswith("B-") or (tag.startswith("I-") and tag[2:] != kind):
            if kind is not None:
                spans.add(Span(kind, start, i - 1))
            kind, start = tag[2:], i
        elif not tag.startswith("I-"):
            if kind is not None:
                spans.add(Span(kind, start, i - 1))
            kind = None
    if kind is not None:
        spans.add(Span(kind, start, len(tags) - 1))
    return spans


def _check_aligned(gold: Sequence, pred: Sequence, what: str) -> None:
    if len(gold) != len(pred):
        raise AlignmentError(f"{len(gold)} gold vs {len(pred)} predicted {what}")


def slot_f1(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]]) -> tuple[float, float, float]:
    """Micro precision, recall and F1 over exact (type, start, end) matches."""
    _check_aligned(gold, pred, "tag sequences")
    correct = n_gold = n_pred = 0
    for i, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise AlignmentError(f"utterance {i}: {len(g)} gold tags vs {len(p)} predicted")
        gs, ps = extract_spans(g), extract_spans(p)
        correct += len(gs & ps)
        n_gold += len(gs)
        n_pred += len(ps)
    if n_gold == 0 and n_pred == 0:
        # nothing to find and nothing found: perfect agreement
        return 1.0, 1.0, 1.0
    precision = correct / n_pred if n_pred else 0.0
    recall = correct / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def intent_accuracy(gold: Sequence[str], pred: Sequence[str]) -> float:
    _check_aligned(gold, pred, "intents")
    if not gold:
        return 0.0
    return sum(g == p for g, p in zip(gold, pred)) / len(gold)


def sentence_accuracy(gold_intents, pred_intents, gold_tags, pred_tags) -> float:
    _check_aligned(gold_intents, pred_intents, "intents")
    _check_aligned(gold_tags, pred_tags, "tag sequences")
    _check_aligned(gold_intents, gold_tags, "utterances")
    if not gold_intents:
        return 0.0
    hits = sum(gi == pi and list(gt) == list(pt)
               for gi, pi, gt, pt in zip(gold_intents, pred_intents, gold_tags, pred_tags))
    return hits / len(gold_intents)


class ErrorCase(NamedTuple):
    utterance: int
    category: str
    gold: Span | str | None
    pred: Span | str | None


def categorize_utterance(index: int, gold_intent: str, pred_intent: str,
                         gold_tags: Sequence[str], pred_tags: Sequence[str]) -> list[ErrorCase]:
    if len(gold_tags) != len(pred_tags):
        raise AlignmentError(f"utterance {index}: {len(gold_tags)} gold tags vs {len(pred_tags)} predicted")
    cases = []
    if gold_intent != pred_intent:
        cases.append(ErrorCase(index, "WI", gold_intent, pred_intent))
    gold_spans = sorted(extract_spans(gold_tags), key=lambda s: (s.start, s.end, s.slot_type))
    pred_spans = sorted(extract_spans(pred_tags), key=lambda s: (s.start, s.end, s.slot_type))
    for p in pred_spans:
        if p in gold_spans:
            continue
        exact = [g for g in gold_spans if (g.start, g.end) == (p.start, p.end)]
        touched = [g for g in gold_spans if g.overlaps(p)]
        if exact:
            cases.append(ErrorCase(index, "WL", exact[0], p))
        elif touched:
            same = [g for g in touched if g.slot_type == p.slot_type]
            if same:
                cases.append(ErrorCase(index, "WB", same[0], p))
            else:
                cases.append(ErrorCase(index, "WB_cross_type", touched[0], p))
        else:
            cases.append(ErrorCase(index, "SS", None, p))
    for g in gold_spans:
        if not any(g.overlaps(p) for p in pred_spans):
            cases.append(ErrorCase(index, "MS", g, None))
    return cases


def error_counts(cases: Sequence[ErrorCase]) -> dict[str, int]:
    """Counts per category; ``WB`` includes ``WB_cross_type``, which is also reported alone."""
    raw = Counter(c.category for c in cases)
    counts = {cat: raw.get(cat, 0) for cat in CATEGORIES}
    counts["WB"] += raw.get("WB_cross_type", 0)
    counts["WB_cross_type"] = raw.get("WB_cross_type", 0)
    return counts


def categorize_errors(gold_intents, pred_intents, gold_tags, pred_tags
                      ) -> tuple[dict[str, int], list[ErrorCase]]:
    _check_aligned(gold_intents, pred_intents, "intents")
    _check_aligned(gold_tags, pred_tags, "tag sequences")
    _check_aligned(gold_intents, gold_tags, "utterances")
    cases = []
    for i, row in enumerate(zip(gold_intents, pred_intents, gold_tags, pred_tags)):
        cases.extend(categorize_utterance(i, *row))
    return error_counts(cases), cases


@dataclass
class EvalReport:
    intent_accuracy: float
    slot_precision: float
    slot_recall: float
    slot_f1: float
    sentence_accuracy: float
    error_counts: dict[str, int] = field(default_factory=dict)
    num_utterances: int = 0

    @property
    def avg_score(self) -> float:
        return (self.intent_accuracy + self.slot_f1) / 2

    def to_dict(self) -> dict:
        return {
            "num_utterances": self.num_utterances,
            "intent_accuracy": self.intent_accuracy,
            "slot_precision": self.slot_precision,
            "slot_recall": self.slot_recall,
            "slot_f1": self.slot_f1,
            "sentence_accuracy": self.sentence_accuracy,
            "error_counts": dict(self.error_counts),
        }

    def format(self) -> str:
        rows = [
            ("Intent Acc.", self.intent_accuracy),
            ("Slot P", self.slot_precision),
            ("Slot R", self.slot_recall),
            ("Slot F1", self.slot_f1),
            ("Sent. Acc.", self.sentence_accuracy),
        ]
        lines = [f"{name:<12}{100 * value:>8.2f}" for name, value in rows]
        if self.error_counts:
            lines.append("  ".join(f"{k}={self.error_counts.get(k, 0)}" for k in CATEGORIES))
        return "\n".join(lines)


def evaluate_predictions(gold_intents, pred_intents, gold_tags, pred_tags) -> EvalReport:
    p, r, f = slot_f1(gold_tags, pred_tags)
    counts, _ = categorize_errors(gold_intents, pred_intents, gold_tags, pred_tags)
    return EvalReport(
        intent_accuracy=intent_accuracy(gold_intents, pred_intents),
        slot_precision=p,
        slot_recall=r,
        slot_f1=f,
        sentence_accuracy=sentence_accuracy(gold_intents, pred_intents, gold_tags, pred_tags),
        error_counts=counts,
        num_utterances=len(gold_intents),
    )
