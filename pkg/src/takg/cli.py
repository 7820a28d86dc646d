"""Command-line entry point: ``takg inspect|train|evaluate|export-embeddings``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import fields

from . import checkpoint
from .data import (PUBLISHED_STATISTICS, DataError, DatasetBundle, Dialect, compare_statistics,
                   dataset_statistics, find_split_files, format_statistics, load_dataset)
from .evaluation import EvaluationError, evaluate_split
from .scoring import SCORERS, Model, fact_arrays, model_from_parameters
from .training import TrainConfig, TrainingError, select_dropout, train

DATA_ROOT_ENV = "TAKG_DATA_ROOT"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("takg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------------ helpers

def resolve_data_dir(path: str | None) -> str:
    if path is None:
        root = os.environ.get(DATA_ROOT_ENV)
        if not root:
            raise UsageError(f"no dataset given (use --data DIR or set {DATA_ROOT_ENV})")
        return root
    if not os.path.exists(path) and os.environ.get(DATA_ROOT_ENV):
        candidate = os.path.join(os.environ[DATA_ROOT_ENV], path)
        if os.path.exists(candidate):
            return candidate
    return path


def dataset_paths(args) -> tuple[str, str, str]:
    if getattr(args, "train_file", None):
        if not (args.valid_file and args.test_file):
            raise UsageError("--train-file needs --valid-file and --test-file")
        return args.train_file, args.valid_file, args.test_file
    return find_split_files(resolve_data_dir(args.data))


def load_bundle(args) -> DatasetBundle:
    return load_dataset(*dataset_paths(args), dialect=args.dialect)


def _add_data_args(p):
    p.add_argument("--data", help=f"directory holding train/valid/test files (relative names resolve under ${DATA_ROOT_ENV})")
    p.add_argument("--train-file")
    p.add_argument("--valid-file")
    p.add_argument("--test-file")
    p.add_argument("--dialect", choices=[d.value for d in Dialect], default=None)


def save_model(path: str, model: Model, metadata: dict) -> None:
    checkpoint.save(path, model.parameters(), metadata)


def load_model(path: str) -> tuple[Model, dict]:
    params, meta = checkpoint.load(path)
    model = model_from_parameters(meta["scorer"], params, meta.get("timestamp_keys", ()))
    return model, meta


def model_metadata(model: Model, bundle: DatasetBundle, config: TrainConfig) -> dict:
    return {
        "scorer": model.scorer,
        "d": model.d,
        "config": config.to_dict(),
        "entities": list(bundle.entities),
        "tokens": list(bundle.token_vocab.names),
        "timestamp_keys": list(bundle.timestamp_keys) if model.scorer == "ttranse" else [],
    }


def check_compatible(meta: dict, bundle: DatasetBundle) -> None:
    if len(meta["entities"]) != bundle.num_entities or len(meta["tokens"]) != len(bundle.token_vocab):
        raise DataError(
            f"checkpoint vocabulary ({len(meta['entities'])} entities, {len(meta['tokens'])} tokens) does not "
            f"match the dataset ({bundle.num_entities} entities, {len(bundle.token_vocab)} tokens)")
    if list(meta["entities"]) != list(bundle.entities) or list(meta["tokens"]) != list(bundle.token_vocab.names):
        raise DataError("checkpoint vocabulary differs from the dataset's (same sizes, different names)")


# ----------------------------------------------------------------- commands

def cmd_inspect(args) -> int:
    bundle = load_bundle(args)
    stats = dataset_statistics(bundle)
    print(format_statistics(stats))
    if args.expect:
        problems = compare_statistics(stats, args.expect)
        for line in problems:
            print(f"MISMATCH\t{line}")
        print(f"{'FAIL' if problems else 'PASS'}\tpublished statistics of {args.expect}")
        return EXIT_DATA if problems else EXIT_OK
    return EXIT_OK


def resolve_run_config(args) -> dict:
    resolved = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            resolved.update(json.load(fh))
    for f in fields(TrainConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            resolved[f.name] = value
    for key in ("data", "train_file", "valid_file", "test_file", "dialect", "out", "dropout_grid"):
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    resolved.setdefault("dialect", Dialect.PLAIN.value)
    if "out" not in resolved:
        raise UsageError("an output directory is required (--out)")
    return resolved


def cmd_train(args) -> int:
    resolved = resolve_run_config(args)
    train_keys = {f.name for f in fields(TrainConfig)}
    try:
        config = TrainConfig.from_dict({k: v for k, v in resolved.items() if k in train_keys})
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    for key in ("data", "train_file", "valid_file", "test_file", "dialect"):
        setattr(args, key, resolved.get(key))
    bundle = load_bundle(args)
    out = resolved["out"]
    os.makedirs(out, exist_ok=True)
    resolved_full = {**config.to_dict(), **{k: v for k, v in resolved.items() if k not in train_keys}}
    with open(os.path.join(out, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(resolved_full, fh, indent=2, sort_keys=True)
        fh.write("\n")

    log_path = os.path.join(out, "train_log.jsonl")
    with open(log_path, "w", encoding="utf-8") as log_fh:
        def sink(record):
            log_fh.write(json.dumps(record, sort_keys=True) + "\n")
            log_fh.flush()
            if not args.quiet:
                print(json.dumps(record, sort_keys=True), file=sys.stderr)

        try:
            if resolved.get("dropout_grid"):
                grid = [float(x) for x in str(resolved["dropout_grid"]).split(",")]
                state, config = select_dropout(bundle, config, grid, log_sink=sink)
            else:
                state = train(bundle, config, log_sink=sink)
        except TrainingError as exc:
            if exc.model is not None:
                save_model(os.path.join(out, "checkpoint.ckpt"), exc.model, model_metadata(exc.model, bundle, config))
            print(f"numeric failure: {exc}", file=sys.stderr)
            return EXIT_NUMERIC

    save_model(os.path.join(out, "checkpoint.ckpt"), state.model, model_metadata(state.model, bundle, config))
    summary = {"epochs": state.epoch, "best_epoch": state.best_epoch, "best_valid_mrr": state.best_valid_mrr,
               "stopped_early": state.stopped_early, "final_mean_loss": state.epoch_losses[-1],
               "dropout": config.dropout}
    with open(os.path.join(out, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model, meta = load_model(args.checkpoint)
    if args.dialect is None:
        args.dialect = Dialect.PLAIN.value
    bundle = load_bundle(args)
    check_compatible(meta, bundle)
    report = evaluate_split(model, bundle, args.split, setting=args.setting,
                            time_aware_filter=not args.time_agnostic_filter, cache=not args.no_cache,
                            workers=args.workers)
    print(report.format_table())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        stem = os.path.join(args.out, f"metrics_{args.split}")
        with open(stem + ".tsv", "w", encoding="utf-8") as fh:
            fh.write(report.to_tsv())
        with open(stem + ".json", "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
        with open(os.path.join(args.out, f"ranks_{args.split}.tsv"), "w", encoding="utf-8") as fh:
            fh.write(report.per_query_tsv())
    return EXIT_OK


def export_rows(model: Model, meta: dict, what: str, bundle: DatasetBundle | None = None, split: str = "train"):
    """Yield ``(id, label, vector)`` rows for entities or distinct predicate sequences."""
    if what == "entities":
        for i, name in enumerate(meta["entities"]):
            yield i, name, model.entity_table.data[i]
        return
    if bundle is None:
        raise UsageError("exporting sequences needs the dataset (--data)")
    part = bundle.split(split)
    seen, rows = {}, []
    for k, (seq, fact) in enumerate(zip(part.sequences, part.facts)):
        key = (seq, fact.time_key() if model.scorer == "ttranse" else None)
        if key not in seen:
            seen[key] = k
            rows.append(k)
    if not rows:
        return
    arrays = fact_arrays(part, bundle.token_vocab, model.timestamp_index).subset(rows)
    vectors = model.relation_vectors(arrays, training=False).data
    for i, (k, vec) in enumerate(zip(rows, vectors)):
        yield i, " ".join(bundle.token_vocab.decode(part.sequences[k])), vec


def cmd_export(args) -> int:
    model, meta = load_model(args.checkpoint)
    bundle = None
    if args.what == "sequences":
        if args.dialect is None:
            args.dialect = Dialect.PLAIN.value
        bundle = load_bundle(args)
        check_compatible(meta, bundle)
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(["id", "label"] + [f"v_{j}" for j in range(model.d)])
        for i, label, vec in export_rows(model, meta, args.what, bundle, args.split):
            writer.writerow([i, label] + [repr(float(x)) for x in vec])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="takg", description="Time-aware link prediction for temporal knowledge graphs.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("inspect", help="dataset statistics")
    _add_data_args(p)
    p.add_argument("--expect", choices=sorted(PUBLISHED_STATISTICS),
                   help="compare against the published statistics of this dataset")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    _add_data_args(p)
    p.add_argument("--config", help="JSON file with run options; flags override it")
    p.add_argument("--out", help="output directory")
    p.add_argument("--scorer", choices=SCORERS)
    p.add_argument("--d", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--num-negatives", dest="num_negatives", type=int)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--validate-every", dest="validate_every", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--dropout-grid", dest="dropout_grid",
                   help="comma-separated dropout values; the best on validation MRR is kept")
    p.add_argument("--seed", type=int)
    p.add_argument("--use-bias", dest="use_bias", action="store_const", const=True)
    p.add_argument("--time-agnostic-filter", dest="time_aware_filter", action="store_const", const=False)
    p.add_argument("-q", "--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="rank test or validation facts")
    p.add_argument("checkpoint")
    _add_data_args(p)
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.add_argument("--setting", choices=("raw", "filtered", "both"), default="both")
    p.add_argument("--time-agnostic-filter", action="store_true",
                   help="filter on (subject, relation, object) ignoring time tokens")
    p.add_argument("--no-cache", action="store_true", help="encode every query's sequence separately")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="directory for metrics and per-query ranks")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-embeddings", help="dump vectors as CSV")
    p.add_argument("checkpoint")
    p.add_argument("--what", choices=("entities", "sequences"), default="entities")
    _add_data_args(p)
    p.add_argument("--split", choices=("train", "valid", "test"), default="train")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "dialect", "") is None and args.command == "inspect":
        args.dialect = Dialect.PLAIN.value
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"takg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, checkpoint.CheckpointError, EvaluationError, FileNotFoundError) as exc:
        print(f"takg: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, FloatingPointError) as exc:
        print(f"takg: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
