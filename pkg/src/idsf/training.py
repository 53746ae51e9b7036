"""Joint training loop, AdamW, grid search over (learning rate, lambda) and multi-seed runs.

After every epoch the model is scored on the validation split; the retained
checkpoint maximises (intent accuracy + slot F1) / 2, earliest epoch on ties.
The test split is never touched here.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .data import DataError, LabelSchema, Utterance, make_batches
from .evaluation import EvalReport, evaluate_predictions
from .model import JointModel, check_lambda, joint_loss  # noqa: F401  (joint_loss re-exported)

logger = logging.getLogger(__name__)

DEFAULT_LEARNING_RATES = (1e-5, 2e-5, 3e-5, 4e-5, 5e-5)
DEFAULT_LAMBDAS = tuple(round(0.05 * i, 2) for i in range(1, 20))


@dataclass
class TrainConfig:
    lam: float = 0.5
    learning_rate: float = 5e-5
    batch_size: int = 32
    epochs: int = 50
    seed: int = 1
    weight_decay: float = 0.01
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    max_grad_norm: float | None = 1.0

    def __post_init__(self):
        check_lambda(self.lam)
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")


@dataclass
class GridSpec:
    learning_rates: Sequence[float] = DEFAULT_LEARNING_RATES
    lambdas: Sequence[float] = DEFAULT_LAMBDAS

    def __post_init__(self):
        if not self.learning_rates or not self.lambdas:
            raise ValueError("grid lists must be non-empty")
        for lam in self.lambdas:
            check_lambda(lam)

    def cells(self) -> list[tuple[float, float]]:
        return [(lr, lam) for lr in self.learning_rates for lam in self.lambdas]


@dataclass
class Checkpoint:
    epoch: int
    weights: dict[str, np.ndarray]
    intent_accuracy: float
    slot_f1: float

    @property
    def avg_score(self) -> float:
        return (self.intent_accuracy + self.slot_f1) / 2


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_intent_accuracy: float
    valid_slot_f1: float

    @property
    def avg_score(self) -> float:
        return (self.valid_intent_accuracy + self.valid_slot_f1) / 2

    def tsv(self) -> str:
        return (f"{self.epoch}\t{self.train_loss:.10f}\t{self.valid_intent_accuracy:.6f}"
                f"\t{self.valid_slot_f1:.6f}\t{self.avg_score:.6f}")


EPOCH_LOG_HEADER = "epoch\ttrain_loss\tvalid_intent_acc\tvalid_slot_f1\tavg_score"


@dataclass
class TrainResult:
    best: Checkpoint
    log: list[EpochRecord] = field(default_factory=list)


# -- optimisation ---------------------------------------------------------------


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray]) -> AdamState:
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adamw_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray | None], state: AdamState,
               lr: float, betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
               weight_decay: float = 0.0) -> None:
    """One in-place AdamW update with bias correction and decoupled weight decay."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ValueError(f"optimizer state holds {len(state.m)} slots for {len(params)} parameters")
    b1, b2 = betas
    state.step += 1
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if m.shape != p.shape:
            raise ValueError(f"optimizer state shape {m.shape} != parameter shape {p.shape}")
        if g is None:
            g = np.zeros_like(p)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if weight_decay:
            p -= lr * weight_decay * p
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


class AdamW:
    def __init__(self, params: Sequence[ad.Tensor], lr: float, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay: float = 0.01):
        self.params = list(params)
        self.lr, self.betas, self.eps, self.weight_decay = lr, tuple(betas), eps, weight_decay
        self.state = AdamState.for_params([p.data for p in self.params])

    def zero_grad(self) -> None:
        ad.zero_grad(self.params)

    def step(self) -> None:
        adamw_step([p.data for p in self.params], [p.grad for p in self.params], self.state,
                   self.lr, self.betas, self.eps, self.weight_decay)


def clip_grad_norm(params: Sequence[ad.Tensor], max_norm: float) -> float:
    total = math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params if p.grad is not None))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return total


# -- evaluation helper ------------------------------------------------------------


def evaluate(model: JointModel, utterances: Sequence[Utterance], batch_size: int = 64
             ) -> tuple[EvalReport, list[tuple[str, list[str]]]]:
    preds = model.predict(utterances, batch_size)
    report = evaluate_predictions(
        [u.intent for u in utterances], [p[0] for p in preds],
        [list(u.tags) for u in utterances], [p[1] for p in preds],
    )
    return report, preds


def check_schema(schema: LabelSchema, *splits: Sequence[Utterance]) -> None:
    intents, tags = set(schema.intents), set(schema.bio_tags)
    for split in splits:
        for i, u in enumerate(split):
            if u.intent not in intents:
                raise DataError(f"utterance {i}: intent {u.intent!r} not in the model schema")
            unknown = set(u.tags) - tags
            if unknown:
                raise DataError(f"utterance {i}: tags {sorted(unknown)} not in the model schema")


# -- training ---------------------------------------------------------------------------


def train(model: JointModel, train_set: Sequence[Utterance], valid_set: Sequence[Utterance],
          config: TrainConfig, on_epoch: Callable[[EpochRecord], None] | None = None) -> TrainResult:
    """Train for ``config.epochs`` epochs; the best validation checkpoint is loaded back into ``model``."""
    if not train_set:
        raise DataError("training split is empty")
    if not valid_set:
        raise DataError("validation split is empty")
    check_schema(model.schema, train_set, valid_set)
    shuffle_rng = np.random.default_rng([config.seed, 100])
    params = model.parameters()
    opt = AdamW(params, config.learning_rate, config.adam_betas, config.adam_eps, config.weight_decay)
    best: Checkpoint | None = None
    log: list[EpochRecord] = []
    for epoch in range(config.epochs):
        total, count = 0.0, 0
        for batch in make_batches(train_set, config.batch_size, shuffle_rng,
                                  vocab=model.vocab, schema=model.schema):
            opt.zero_grad()
            out = model.loss(batch, config.lam, train=True)
            ad.backward(out.loss)
            if config.max_grad_norm is not None:
                clip_grad_norm(params, config.max_grad_norm)
            opt.step()
            total += out.loss.item() * len(batch)
            count += len(batch)
        report, _ = evaluate(model, valid_set)
        record = EpochRecord(epoch, total / count, report.intent_accuracy, report.slot_f1)
        log.append(record)
        logger.info("epoch %d loss %.4f intent %.4f f1 %.4f", epoch, record.train_loss,
                    record.valid_intent_accuracy, record.valid_slot_f1)
        if on_epoch is not None:
            on_epoch(record)
        if best is None or record.avg_score > best.avg_score:
            best = Checkpoint(epoch, model.state_dict(), report.intent_accuracy, report.slot_f1)
    model.load_state_dict(best.weights)
    return TrainResult(best, log)


def write_epoch_log(path: str | Path, log: Sequence[EpochRecord]) -> None:
    lines = [EPOCH_LOG_HEADER] + [r.tsv() for r in log]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- grid search ------------------------------------------------------------------------


@dataclass
class GridResult:
    learning_rate: float
    lam: float
    avg_score: float
    best_epoch: int
    intent_accuracy: float
    slot_f1: float


GRID_FIELDS = ["learning_rate", "lam", "avg_score", "best_epoch", "intent_accuracy", "slot_f1"]


def _read_status(path: Path) -> list[GridResult]:
    if not path.is_file():
        return []
    with path.open(encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh, delimiter="\t"))
    return [GridResult(float(r["learning_rate"]), float(r["lam"]), float(r["avg_score"]),
                       int(r["best_epoch"]), float(r["intent_accuracy"]), float(r["slot_f1"]))
            for r in rows]


def _append_status(path: Path, result: GridResult) -> None:
    new = not path.is_file()
    with path.open("a", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=GRID_FIELDS, delimiter="\t", lineterminator="\n")
        if new:
            writer.writeheader()
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in asdict(result).items()})


def grid_search(model_factory: Callable[[int], JointModel], grids: GridSpec,
                train_set: Sequence[Utterance], valid_set: Sequence[Utterance], base: TrainConfig,
                status_path: str | Path | None = None,
                on_cell: Callable[[GridResult, JointModel, TrainResult], None] | None = None,
                ) -> list[GridResult]:
    """Train one model per (lr, lambda) cell; results ranked by best validation avg score.

    With ``status_path``, finished cells are appended to a TSV file and skipped
    when the search is rerun, so an interrupted search resumes where it stopped.
    """
    status = Path(status_path) if status_path is not None else None
    done = {(r.learning_rate, r.lam): r for r in _read_status(status)} if status else {}
    results = []
    for lr, lam in grids.cells():
        if (lr, lam) in done:
            results.append(done[(lr, lam)])
            continue
        cfg = TrainConfig(**{**asdict(base), "learning_rate": lr, "lam": lam})
        model = model_factory(cfg.seed)
        run = train(model, train_set, valid_set, cfg)
        cell = GridResult(lr, lam, run.best.avg_score, run.best.epoch,
                          run.best.intent_accuracy, run.best.slot_f1)
        logger.info("grid cell lr=%g lambda=%g avg=%.4f", lr, lam, cell.avg_score)
        if status:
            _append_status(status, cell)
        if on_cell is not None:
            on_cell(cell, model, run)
        results.append(cell)
    return sorted(results, key=lambda r: -r.avg_score)


# -- multiple seeds ---------------------------------------------------------------------


METRICS = ("intent_accuracy", "slot_f1", "sentence_accuracy")


def summarize_runs(rows: Sequence[dict[str, float]], metrics: Sequence[str] = METRICS
                   ) -> tuple[dict[str, float], dict[str, float]]:
    """Per-metric mean and sample standard deviation."""
    if len(rows) < 2:
        raise ValueError("need at least two runs to summarise")
    mean = {m: float(np.mean([r[m] for r in rows])) for m in metrics}
    std = {m: float(np.std([r[m] for r in rows], ddof=1)) for m in metrics}
    return mean, std


@dataclass
class SeedSummary:
    rows: list[dict]
    mean: dict[str, float]
    std: dict[str, float]


def multi_seed(model_factory: Callable[[int], JointModel], train_set, valid_set, test_set,
               config: TrainConfig, seeds: Sequence[int],
               on_run: Callable[[int, JointModel, TrainResult], None] | None = None) -> SeedSummary:
    """Train once per seed, score the selected checkpoint on ``test_set``, then average."""
    if len(seeds) < 2:
        raise ValueError("multi_seed needs at least two seeds")
    rows = []
    for seed in seeds:
        cfg = TrainConfig(**{**asdict(config), "seed": seed})
        model = model_factory(seed)
        run = train(model, train_set, valid_set, cfg)
        report, _ = evaluate(model, test_set)
        rows.append({"seed": seed, **{m: getattr(report, m) for m in METRICS}})
        if on_run is not None:
            on_run(seed, model, run)
    mean, std = summarize_runs(rows)
    return SeedSummary(rows, mean, std)
