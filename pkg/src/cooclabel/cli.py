"""Command-line entry point: simulate, fit, predict, eval, and bench."""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import bench as bench_mod
from .baseline import em_fit, mv_initialize
from .data import (
    load_dataset,
    load_model,
    load_predictions,
    load_truth_labels,
    save_dataset,
    save_model,
    save_predictions,
    save_truth_labels,
)
from .errors import DataError
from .klfit import FitConfig, multispa_kl
from .multispa import MultiSpaConfig, multispa
from .predict import classification_error, map_predict, model_mse
from .synth import SynthConfig, generate

log = logging.getLogger("cooclabel")

FIT_METHODS = ("multispa", "multispa-kl", "multispa-ds", "mv-ds", "mv")


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage problems with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cooclabel", description=__doc__)
    parser.add_argument("--threads", type=int, default=1,
                        help="cap on worker threads (computation is single-process)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="generate a synthetic dataset")
    sim.add_argument("--n", type=int, required=True, help="number of items")
    sim.add_argument("--m", type=int, required=True, help="number of annotators")
    sim.add_argument("--k", type=int, required=True, help="number of classes")
    sim.add_argument("--p", type=float, default=1.0, help="labeling probability")
    sim.add_argument("--regime", choices=("case1", "case2", "all_random"), default="case2")
    sim.add_argument("--prior", default=None,
                     help="comma-separated class prior (default uniform)")
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--out-dir", required=True)

    fit = sub.add_parser("fit", help="fit a model from a response CSV")
    fit.add_argument("--method", choices=FIT_METHODS, required=True)
    fit.add_argument("--data", required=True, help="response CSV")
    fit.add_argument("--k", type=int, required=True, help="number of classes")
    fit.add_argument("--out", required=True, help="model file to write")
    fit.add_argument("--eta", type=float, default=1e-6, help="stacked-column mass filter")
    fit.add_argument("--reference", type=int, default=None, help="alignment reference annotator")
    fit.add_argument("--s-min", type=int, default=1, help="min co-label count for prior pairs")
    fit.add_argument("--perm", choices=("assignment", "diagonal"), default="assignment",
                     help="permutation fixing: graph alignment or diagonal heuristic")
    fit.add_argument("--max-sweeps", type=int, default=100, help="KL outer sweeps")
    fit.add_argument("--tol", type=float, default=1e-6, help="KL relative objective tolerance")
    fit.add_argument("--delta", type=float, default=1e-6, help="probability floor")
    fit.add_argument("--inner-iters", type=int, default=50, help="KL inner iterations")
    fit.add_argument("--weight-by-count", action="store_true",
                     help="weight KL pair terms by co-label count")
    fit.add_argument("--em-iters", type=int, default=100, help="EM iterations")
    fit.add_argument("--em-tol", type=float, default=1e-7, help="EM log-likelihood tolerance")

    pred = sub.add_parser("predict", help="posterior label prediction")
    pred.add_argument("--model", required=True)
    pred.add_argument("--data", required=True)
    pred.add_argument("--out", required=True)

    ev = sub.add_parser("eval", help="score predictions or compare models")
    ev.add_argument("--pred", help="predictions CSV")
    ev.add_argument("--truth", help="ground-truth CSV")
    ev.add_argument("--model", help="fitted model file")
    ev.add_argument("--truth-model", help="reference model file")
    ev.add_argument("--per-annotator", action="store_true",
                    help="permute each annotator independently in model MSE")

    be = sub.add_parser("bench", help="reproduce a synthetic benchmark table")
    be.add_argument("--table", type=int, choices=(3, 4, 5), required=True)
    be.add_argument("--trials", type=int, default=10)
    be.add_argument("--seed", type=int, required=True)
    be.add_argument("--out-dir", default=".")
    be.add_argument("--n-items", type=int, default=10000,
                    help="items per trial (reduce for a quicker pass)")
    be.add_argument("--m", type=int, default=25, help="annotators per trial")
    return parser


def _parse_prior(text: str | None, k: int) -> np.ndarray | None:
    if text is None:
        return None
    try:
        values = np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError:
        raise DataError(f"cli: prior {text!r} is not a comma-separated float list") from None
    if values.size != k:
        raise DataError(f"cli: prior has {values.size} entries, expected {k}")
    return values


def _cmd_simulate(args) -> int:
    config = SynthConfig(
        n_items=args.n,
        n_annotators=args.m,
        n_classes=args.k,
        prior=_parse_prior(args.prior, args.k),
        p=args.p,
        regime=args.regime,
        seed=args.seed,
    )
    dataset, model, labels = generate(config)
    os.makedirs(args.out_dir, exist_ok=True)
    data_path = os.path.join(args.out_dir, "dataset.csv")
    model_path = os.path.join(args.out_dir, "truth_model.json")
    labels_path = os.path.join(args.out_dir, "truth_labels.csv")
    save_dataset(dataset, data_path)
    save_model(model, model_path)
    save_truth_labels(labels, labels_path)
    log.info("wrote %s, %s, %s", data_path, model_path, labels_path)
    print(f"dataset: {data_path} ({len(dataset.responses)} responses)")
    return 0


def _cmd_fit(args) -> int:
    dataset = load_dataset(args.data, n_classes=args.k)
    spa_config = MultiSpaConfig(
        eta=args.eta, reference=args.reference, s_min=args.s_min, permutation=args.perm
    )
    if args.method == "multispa":
        model = multispa(dataset, spa_config)
    elif args.method == "multispa-kl":
        fit_config = FitConfig(
            max_outer_sweeps=args.max_sweeps,
            inner_iterations=args.inner_iters,
            tol=args.tol,
            delta=args.delta,
            weight_by_count=args.weight_by_count,
        )
        model = multispa_kl(dataset, fit_config, spa_config)
    elif args.method == "multispa-ds":
        init = multispa(dataset, spa_config)
        model, _, _ = em_fit(dataset, init, max_iters=args.em_iters,
                             tol=args.em_tol, delta=args.delta)
    elif args.method == "mv-ds":
        init = mv_initialize(dataset, delta=args.delta)
        model, _, _ = em_fit(dataset, init, max_iters=args.em_iters,
                             tol=args.em_tol, delta=args.delta)
    else:  # mv
        model = mv_initialize(dataset, delta=args.delta)
    save_model(model, args.out)
    log.info("fit %s on %s -> %s", args.method, args.data, args.out)
    print(f"model: {args.out}")
    return 0


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    dataset = load_dataset(args.data, n_classes=model.n_classes,
                           n_annotators=model.n_annotators)
    labels, posteriors = map_predict(model, dataset)
    save_predictions(labels, posteriors, args.out)
    print(f"predictions: {args.out}")
    return 0


def _cmd_eval(args) -> int:
    did_something = False
    if args.pred or args.truth:
        if not (args.pred and args.truth):
            raise _UsageError("eval needs both --pred and --truth")
        items, predicted = load_predictions(args.pred)
        truth = load_truth_labels(args.truth, n_items=int(items.max(initial=0)))
        missing = items[truth[items - 1] < 1]
        if missing.size:
            raise DataError(f"predict: missing truth label for item {int(missing[0])}")
        error = classification_error(predicted, truth[items - 1])
        print(f"items = {items.size}")
        print(f"classification_error_percent = {error:.6g}")
        did_something = True
    if args.model or args.truth_model:
        if not (args.model and args.truth_model):
            raise _UsageError("eval needs both --model and --truth-model")
        estimate = load_model(args.model)
        reference = load_model(args.truth_model)
        value = model_mse(estimate, reference, per_annotator=args.per_annotator)
        print(f"model_mse = {value:.6g}")
        did_something = True
    if not did_something:
        raise _UsageError("eval needs --pred/--truth or --model/--truth-model")
    return 0


def _cmd_bench(args) -> int:
    bench_mod.run_bench(
        args.table,
        args.trials,
        args.seed,
        out_dir=args.out_dir,
        n_items=args.n_items,
        n_annotators=args.m,
    )
    return 0


COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "predict": _cmd_predict,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        log.info("config: %s", vars(args))
        return COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"cooclabel: error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"cooclabel: error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"cooclabel: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
