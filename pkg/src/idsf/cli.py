"""Command-line entry point: ``idsf {train,gridsearch,eval,predict,errors,synth}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import config as cfgmod
from . import plots
from .attention import AttentionVariant
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import (
    CorpusSplits,
    DataError,
    TokenVocab,
    Utterance,
    build_schema,
    load_corpus,
    load_split,
    write_corpus,
)
from .encoder import EncoderConfig, LengthError
from .evaluation import CATEGORIES, AlignmentError, EvalReport, categorize_errors
from .model import JointModel
from .synthetic import generate_corpus
from .training import (
    METRICS,
    GridSpec,
    TrainConfig,
    check_schema,
    evaluate,
    grid_search,
    summarize_runs,
    train,
    write_epoch_log,
)

logger = logging.getLogger("idsf")

CHECKPOINT = "model.ckpt"
EPOCH_LOG = "epoch_log.tsv"
EFFECTIVE_CONFIG = "config.txt"


class CLIError(Exception):
    pass


# -- helpers -------------------------------------------------------------------------


def _config(args) -> dict:
    flags = {k: v for k, v in vars(args).items() if k in cfgmod.SCHEMA}
    return cfgmod.resolve(flags, args.config)


def _corpus(conf: dict) -> CorpusSplits:
    if not conf["data_dir"]:
        raise CLIError("--data-dir is required")
    if not Path(conf["data_dir"]).is_dir():
        raise CLIError(f"data directory not found: {conf['data_dir']}")
    return load_corpus(conf["data_dir"])


def _factory(conf: dict, splits: CorpusSplits):
    schema = build_schema(splits.train, splits.valid, splits.test)
    vocab = TokenVocab.from_utterances(splits.train)
    longest = max(len(u) for u in splits.all())
    enc = EncoderConfig(
        vocab_size=len(vocab), d_model=conf["d_model"], n_layers=conf["n_layers"],
        n_heads=conf["n_heads"], max_len=max(conf["max_len"], longest + 1), dropout=conf["dropout"],
    )

    def make(seed: int) -> JointModel:
        return JointModel(enc, schema, vocab, conf["variant"], seed, conf["constrain_bio"])

    return make


def _train_config(conf: dict, seed: int | None = None) -> TrainConfig:
    return TrainConfig(
        lam=conf["lambda"], learning_rate=conf["lr"], batch_size=conf["batch_size"],
        epochs=conf["epochs"], seed=conf["seed"] if seed is None else seed,
        weight_decay=conf["weight_decay"], max_grad_norm=conf["max_grad_norm"],
    )


def _write_report(out_dir: Path, stem: str, report: EvalReport, plot: bool) -> None:
    (out_dir / f"{stem}.txt").write_text(report.format() + "\n", encoding="utf-8")
    (out_dir / f"{stem}.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
                                          encoding="utf-8")
    if plot:
        plots.error_counts(report.error_counts, out_dir / "figures" / f"{stem}_errors.png")


def _score_line(label: str, values: dict[str, float]) -> str:
    return f"{label:<10}" + "".join(f"{100 * values[m]:>10.2f}" for m in METRICS)


SCORE_HEADER = f"{'run':<10}{'intent':>10}{'slot_f1':>10}{'sent_acc':>10}"


def _train_one(conf: dict, splits: CorpusSplits, out_dir: Path, seed: int) -> tuple[JointModel, object]:
    model = _factory(conf, splits)(seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_lines = []

    def on_epoch(rec):
        log_lines.append(rec)
        write_epoch_log(out_dir / EPOCH_LOG, log_lines)

    run = train(model, splits.train, splits.valid, _train_config(conf, seed), on_epoch=on_epoch)
    save_checkpoint(out_dir / CHECKPOINT, model, extra={"best_epoch": run.best.epoch})
    report, _ = evaluate(model, splits.valid)
    _write_report(out_dir, "valid_report", report, conf["plots"])
    summary = {
        "seed": seed,
        "best_epoch": run.best.epoch,
        "valid_intent_accuracy": run.best.intent_accuracy,
        "valid_slot_f1": run.best.slot_f1,
        "valid_avg_score": run.best.avg_score,
        "valid_sentence_accuracy": report.sentence_accuracy,
        "num_parameters": model.num_parameters(),
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if conf["plots"]:
        plots.training_curves(run.log, out_dir / "figures" / "training_curves.png")
    return model, run


# -- subcommands --------------------------------------------------------------------------


def cmd_train(args) -> int:
    conf = _config(args)
    splits = _corpus(conf)
    out = Path(conf["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / EFFECTIVE_CONFIG).write_text(cfgmod.dump(conf), encoding="utf-8")
    seeds = conf["seeds"]
    if not seeds:
        model, run = _train_one(conf, splits, out, conf["seed"])
        print(f"best epoch {run.best.epoch}: intent {100 * run.best.intent_accuracy:.2f} "
              f"slot F1 {100 * run.best.slot_f1:.2f} avg {100 * run.best.avg_score:.2f}")
        print(f"checkpoint: {out / CHECKPOINT}")
        return 0
    if len(seeds) < 2:
        raise CLIError("--seeds needs at least two seeds")
    rows = []
    for seed in seeds:
        model, run = _train_one(conf, splits, out / f"seed_{seed}", seed)
        if splits.test:
            report, _ = evaluate(model, splits.test)
            rows.append({"seed": seed, **{m: getattr(report, m) for m in METRICS}})
    if rows:
        _print_seed_table(rows, out, conf["plots"], "test")
    return 0


def _print_seed_table(rows: list[dict], out: Path | None, plot: bool, split: str) -> None:
    mean, std = summarize_runs(rows)
    lines = [SCORE_HEADER] + [_score_line(f"seed {r['seed']}", r) for r in rows]
    lines.append(_score_line("mean", mean))
    lines.append(_score_line("std", std))
    text = "\n".join(lines)
    print(text)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / f"seeds_{split}.txt").write_text(text + "\n", encoding="utf-8")
        (out / f"seeds_{split}.json").write_text(
            json.dumps({"rows": rows, "mean": mean, "std": std}, indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
        if plot:
            plots.seed_summary(rows, METRICS, out / "figures" / f"seeds_{split}.png")


def cmd_gridsearch(args) -> int:
    conf = _config(args)
    splits = _corpus(conf)
    out = Path(conf["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / EFFECTIVE_CONFIG).write_text(cfgmod.dump(conf), encoding="utf-8")
    grids = GridSpec(conf["lrs"], conf["lambdas"])
    status = out / "grid_status.tsv"
    best_path = out / "best_model.ckpt"
    best_meta = out / "best_cell.json"
    best_score = [json.loads(best_meta.read_text())["avg_score"] if best_meta.is_file() else -1.0]
    logger.info("grid search over %d cells", len(grids.cells()))

    def on_cell(cell, model, run):
        if cell.avg_score > best_score[0]:
            best_score[0] = cell.avg_score
            save_checkpoint(best_path, model, extra={"learning_rate": cell.learning_rate, "lambda": cell.lam})
            best_meta.write_text(json.dumps(vars(cell), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    results = grid_search(_factory(conf, splits), grids, splits.train, splits.valid,
                          _train_config(conf), status_path=status, on_cell=on_cell)
    lines = ["rank\tlearning_rate\tlambda\tavg_score\tintent_acc\tslot_f1\tbest_epoch"]
    for i, r in enumerate(results, start=1):
        lines.append(f"{i}\t{r.learning_rate:g}\t{r.lam:g}\t{100 * r.avg_score:.2f}"
                     f"\t{100 * r.intent_accuracy:.2f}\t{100 * r.slot_f1:.2f}\t{r.best_epoch}")
    table = "\n".join(lines) + "\n"
    (out / "grid_results.tsv").write_text(table, encoding="utf-8")
    print(table, end="")
    if conf["plots"]:
        plots.grid_heatmap(results, out / "figures" / "grid_heatmap.png")
    return 0


def _eval_split(args) -> list[Utterance]:
    if args.split_dir:
        return load_split(args.split_dir)
    if not args.data_dir:
        raise CLIError("give --split-dir, or --data-dir with --split")
    return load_split(Path(args.data_dir) / args.split)


def cmd_eval(args) -> int:
    data = _eval_split(args)
    out = Path(args.output_dir) if args.output_dir else None
    if args.seeds:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        if len(seeds) < 2:
            raise CLIError("--seeds needs at least two seeds")
        if not args.run_dir:
            raise CLIError("--seeds needs --run-dir holding seed_<n>/model.ckpt")
        rows = []
        for seed in seeds:
            model = load_checkpoint(Path(args.run_dir) / f"seed_{seed}" / CHECKPOINT)
            check_schema(model.schema, data)
            report, _ = evaluate(model, data)
            rows.append({"seed": seed, **{m: getattr(report, m) for m in METRICS}})
        _print_seed_table(rows, out, not args.no_plots, Path(args.split_dir or args.split).name)
        return 0
    if not args.checkpoint:
        raise CLIError("--checkpoint is required")
    model = load_checkpoint(args.checkpoint)
    check_schema(model.schema, data)
    report, _ = evaluate(model, data)
    print(f"Intent Acc.  {100 * report.intent_accuracy:.2f}")
    print(f"Slot F1      {100 * report.slot_f1:.2f}")
    print(f"Sent. Acc.   {100 * report.sentence_accuracy:.2f}")
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _write_report(out, "eval_report", report, not args.no_plots)
    return 0


def cmd_predict(args) -> int:
    model = load_checkpoint(args.checkpoint)
    text = Path(args.input).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    token_lists = []
    for i, line in enumerate(lines, start=1):
        toks = line.split()
        if not toks:
            raise DataError(f"{args.input}:{i}: empty line")
        token_lists.append(toks)
    preds = model.predict(token_lists) if token_lists else []
    body = "".join(f"{intent}\t{' '.join(tags)}\n" for intent, tags in preds)
    if args.output:
        Path(args.output).write_text(body, encoding="utf-8")
    else:
        sys.stdout.write(body)
    return 0


def read_predictions(path: str | Path) -> list[tuple[str, list[str]]]:
    rows = []
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for i, line in enumerate(lines, start=1):
        if "\t" not in line:
            raise DataError(f"{path}:{i}: expected '<intent>\\t<tags>'")
        intent, tags = line.split("\t", 1)
        rows.append((intent, tags.split()))
    return rows


def cmd_errors(args) -> int:
    gold = load_split(args.gold_dir)
    preds = read_predictions(args.predictions)
    if len(preds) != len(gold):
        raise AlignmentError(f"{len(gold)} gold utterances vs {len(preds)} prediction lines")
    counts, cases = categorize_errors(
        [u.intent for u in gold], [p[0] for p in preds],
        [list(u.tags) for u in gold], [p[1] for p in preds],
    )
    for cat in CATEGORIES:
        print(f"{cat}\t{counts[cat]}")
    print(f"WB_cross_type\t{counts['WB_cross_type']}")
    diag = ["utterance\tcategory\tgold\tpredicted"]
    for c in cases:
        diag.append(f"{c.utterance}\t{c.category}\t{_fmt(c.gold)}\t{_fmt(c.pred)}")
    print("\n".join(diag))
    if args.output_dir:
        out = Path(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "error_counts.json").write_text(json.dumps(counts, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        (out / "error_cases.tsv").write_text("\n".join(diag) + "\n", encoding="utf-8")
        if not args.no_plots:
            plots.error_counts(counts, out / "figures" / "error_counts.png")
    return 0


def _fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, tuple) and hasattr(x, "slot_type"):
        return f"{x.slot_type}[{x.start}:{x.end}]"
    return str(x)


def cmd_synth(args) -> int:
    splits = generate_corpus(args.n_train, args.n_valid, args.n_test, args.seed)
    write_corpus(args.output_dir, splits)
    print(f"wrote {len(splits.train)}/{len(splits.valid)}/{len(splits.test)} utterances to {args.output_dir}")
    return 0


# -- parser ------------------------------------------------------------------------------------


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file (flags override it)")
    p.add_argument("--data-dir", dest="data_dir", help="directory holding train/, dev/, test/")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--lambda", dest="lambda", type=float, help="mixture weight in (0,1)")
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int, help="default 50")
    p.add_argument("--batch-size", dest="batch_size", type=int, help="default 32")
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", help="comma-separated seeds for repeated runs")
    p.add_argument("--variant", choices=[v.value for v in AttentionVariant])
    p.add_argument("--constrain-bio", dest="constrain_bio", action="store_const", const=True)
    p.add_argument("--d-model", dest="d_model", type=int)
    p.add_argument("--layers", dest="n_layers", type=int)
    p.add_argument("--heads", dest="n_heads", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--max-len", dest="max_len", type=int)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--no-plots", dest="plots", action="store_const", const=False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="idsf", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model (or one per --seeds entry)")
    _add_run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gridsearch", help="grid search learning rate x lambda on the dev split")
    _add_run_flags(p)
    p.add_argument("--lrs", help="comma-separated learning rates")
    p.add_argument("--lambdas", help="comma-separated lambdas")
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("eval", help="score a checkpoint on a split")
    p.add_argument("--checkpoint")
    p.add_argument("--data-dir")
    p.add_argument("--split", default="test", help="split name under --data-dir (default test)")
    p.add_argument("--split-dir", help="explicit split directory (overrides --data-dir/--split)")
    p.add_argument("--seeds", help="evaluate --run-dir/seed_<n>/model.ckpt for each seed")
    p.add_argument("--run-dir")
    p.add_argument("--output-dir")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="tag raw utterances, one per line")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("errors", help="count WI/MS/SS/WB/WL errors of a prediction file")
    p.add_argument("--gold-dir", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--output-dir")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_errors)

    p = sub.add_parser("synth", help="write a generated toy corpus")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-train", type=int, default=50)
    p.add_argument("--n-valid", type=int, default=20)
    p.add_argument("--n-test", type=int, default=20)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (CLIError, cfgmod.ConfigError, DataError, AlignmentError, CheckpointError,
            LengthError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
