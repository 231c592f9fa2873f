"""Command-line surface: prepare data, train, evaluate, study, query, export.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
All emitted tables are UTF-8, tab-delimited, header-first; outputs are
written atomically so failures leave no partial files.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import evaluation as ev
from .data import (DataError, FileFormat, densify, filter_items, build_sequences,
                   load_dataset, load_events, save_dataset, split_leave_last,
                   summarize, truncate_recent)
from .models import KINDS, load_model, save_model
from .training import NumericError, TrainConfig, fit_pop, train

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _write_text(path: str, text: str):
    if path == "-":
        sys.stdout.write(text)
        return
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _save_model_atomic(model, path: str):
    tmp = path + ".tmp"
    save_model(model, tmp)
    os.replace(tmp, path)


def _file_format(args) -> FileFormat:
    delim = "\t" if args.delimiter == "TAB" else args.delimiter
    return FileFormat(delimiter=delim, columns=tuple(args.columns.split(",")))


def _train_config(args) -> TrainConfig:
    return TrainConfig(epsilon=args.lr, lam=args.lam, k=args.k,
                       order=args.l, alpha=args.alpha, max_epochs=args.max_epochs,
                       eval_every=args.eval_every, patience=args.patience,
                       seed=args.seed, tie_fpmc=getattr(args, "tie_fpmc", False))


def _add_train_flags(p):
    p.add_argument("--k", type=int, default=10, help="latent dimension")
    p.add_argument("--l", type=int, default=1, help="Markov chain order")
    p.add_argument("--alpha", type=float, default=0.2, help="history-size damping exponent")
    p.add_argument("--lr", type=float, default=0.01, help="learning rate")
    p.add_argument("--lambda", dest="lam", type=float, default=0.1, help="weight decay")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--max-epochs", type=int, default=200)
    p.add_argument("--eval-every", type=int, default=2)
    p.add_argument("--patience", type=int, default=10)


def build_parser() -> _Parser:
    ap = _Parser(prog="fossil", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="raw log -> canonical split dataset file")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--delimiter", default="TAB", help="field delimiter, TAB for tab")
    p.add_argument("--columns", default="user,item,timestamp",
                   help="comma list naming the file's columns")
    p.add_argument("--min-count", type=int, default=5)
    p.add_argument("--truncate", type=int, default=None,
                   help="keep only the N most recent actions per user")
    p.add_argument("--no-user-filter", action="store_true",
                   help="apply the frequency filter to items only")

    p = sub.add_parser("train", help="fit one model on a prepared dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True, choices=list(KINDS))
    p.add_argument("--out", required=True)
    p.add_argument("--trace", default=None, help="training trace path (default <out>.trace.tsv)")
    p.add_argument("--tie-fpmc", action="store_true",
                   help="share the two transition matrices of fpmc")
    _add_train_flags(p)

    p = sub.add_parser("eval", help="test AUC report for trained model files")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model-file", action="append", required=True)
    p.add_argument("--out", required=True, help="report path prefix (.tsv/.json added)")
    p.add_argument("--seed", type=int, default=1)

    p = sub.add_parser("study", help="sparsity study over truncation thresholds")
    p.add_argument("--dataset", required=True, help="prepared dataset (marks are stripped)")
    p.add_argument("--thresholds", default="50,30,20,10,5")
    p.add_argument("--models", default="pop,bprmf,fism,fmc,fpmc,fossil",
                   help="comma list; fossil:L selects a chain order")
    p.add_argument("--out", required=True, help="report path prefix (.tsv/.json added)")
    _add_train_flags(p)

    p = sub.add_parser("query", help="items most likely to follow a query item")
    p.add_argument("--model-file", required=True)
    p.add_argument("--item", required=True)
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--out", default="-")

    p = sub.add_parser("weights", help="per-user chain weight table, coldest first")
    p.add_argument("--model-file", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", default="-")

    p = sub.add_parser("recommend", help="top unconsumed items for one user")
    p.add_argument("--model-file", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--out", default="-")
    return ap


def _cmd_prepare(args) -> int:
    log = load_events(args.input, _file_format(args))
    log = (filter_items(log, args.min_count) if args.no_user_filter
           else densify(log, args.min_count))
    ds = build_sequences(log)
    if args.truncate is not None:
        ds = truncate_recent(ds, args.truncate)
    ds = split_leave_last(ds)
    from .data import dataset_to_text

    _write_text(args.out, dataset_to_text(ds))
    s = summarize(ds)
    print(f"users\t{s.n_users}\nitems\t{s.n_items}\nactions\t{s.n_actions}\n"
          f"actions_per_user\t{s.actions_per_user:.2f}\n"
          f"actions_per_item\t{s.actions_per_item:.2f}")
    return 0


def _cmd_train(args) -> int:
    ds = load_dataset(args.dataset)
    config = _train_config(args)
    if args.model == "pop":
        model = fit_pop(ds, config)
        trace_text = "# rng=none kind=pop\nepoch\tval_auc\tseconds\ttriples\n"
    else:
        result = train(ds, args.model, config)
        model = result.model
        trace_text = result.trace_text()
    _save_model_atomic(model, args.out)
    _write_text(args.trace or args.out + ".trace.tsv", trace_text)
    return 0


def _names_for(models) -> list[str]:
    kinds = [m.kind for m in models]
    names = []
    for m in models:
        if kinds.count(m.kind) > 1 and m.kind in ("fossil", "fism"):
            names.append(f"{m.kind}:{m.hyper.order}")
        else:
            names.append(m.kind)
    if len(set(names)) != len(names):
        raise DataError("model files are indistinguishable (same kind and order)")
    return names


def _cmd_eval(args) -> int:
    ds = load_dataset(args.dataset)
    models = [load_model(p) for p in args.model_file]
    for m, path in zip(models, args.model_file):
        if m.item_ids != ds.item_ids or m.user_ids != ds.user_ids:
            raise DataError(f"model {path} was trained on a different dataset")
    names = _names_for(models)
    config = TrainConfig(seed=args.seed)
    report = ev.evaluate_models(ds, names, config,
                                trained=dict(zip(names, models)))
    report.config = {"models_loaded_from": list(args.model_file)}
    table, doc = report.to_table(), report.to_json()  # render both before writing
    _write_text(args.out + ".tsv", table)
    _write_text(args.out + ".json", doc)
    sys.stdout.write(table)
    return 0


def _cmd_study(args) -> int:
    ds = load_dataset(args.dataset)
    base = ds.unsplit()
    thresholds = [int(x) for x in args.thresholds.split(",")]
    specs = args.models.split(",")
    config = _train_config(args)
    report = ev.sparsity_study(base, thresholds, specs, config)
    table, doc = report.to_table(), report.to_json()
    _write_text(args.out + ".tsv", table)
    _write_text(args.out + ".json", doc)
    sys.stdout.write(table)
    return 0


def _cmd_query(args) -> int:
    model = load_model(args.model_file)
    if args.item not in model.item_ids:
        raise DataError(f"item {args.item!r} is not in the model's item table")
    query = model.item_ids.index(args.item)
    _write_text(args.out, ev.transition_table(model, query, args.top))
    return 0


def _cmd_weights(args) -> int:
    model = load_model(args.model_file, expect_kind="fossil")
    ds = load_dataset(args.dataset)
    rows = ev.export_user_weights(model, ds)
    _write_text(args.out, ev.user_weights_table(rows))
    return 0


def _cmd_recommend(args) -> int:
    model = load_model(args.model_file)
    ds = load_dataset(args.dataset)
    if args.user not in ds.user_ids:
        raise DataError(f"user {args.user!r} is not in the dataset")
    u = ds.user_ids.index(args.user)
    items, scores = ev.recommend_next(model, ds, u, args.top)
    _write_text(args.out, ev.recommendation_table(model, items, scores))
    return 0


_COMMANDS = {
    "prepare": _cmd_prepare,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "study": _cmd_study,
    "query": _cmd_query,
    "weights": _cmd_weights,
    "recommend": _cmd_recommend,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
