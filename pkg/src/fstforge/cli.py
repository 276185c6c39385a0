"""Command-line entry point: ``fst-forge <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import yaml

from .align import format_alignment
from .baselines import dd_ostia, no_change, ostia
from .data import Dataset, load_dataset
from .errors import ConfigError, FstForgeError
from .extract import ExtractionConfig, extract
from .fst import deserialize, serialize
from .pipeline import (
    FstSystem,
    align_pairs,
    evaluate,
    synthetic_inputs,
    training_sequences,
)
from .rnn import (
    GRID_DROPOUT,
    GRID_EPOCHS,
    GRID_HIDDEN,
    GRID_LR,
    TrainConfig,
    load_model,
    save_model,
    train,
)
from .sweep import SweepSpec, run_sweep

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
OBJECTIVES = {"transduction": "transduction", "lm": "language_model",
              "binary": "binary_classification"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _lambda(value: str):
    if value.lower() == "none":
        return None
    return int(value)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML or JSON file whose keys override flags")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output path")
    common.add_argument("-v", "--verbose", action="store_true")

    data = _Parser(add_help=False)
    data.add_argument("dataset", help="directory or file prefix with train/dev/test files")
    data.add_argument("--task", choices=["inflection", "g2p", "normalization"], required=True)
    data.add_argument("--sort-tags", action="store_true",
                      help="sort inflection tags instead of keeping file order")

    align = _Parser(add_help=False)
    align.add_argument("--align", choices=["crp", "med"], default="crp")
    align.add_argument("--merge", choices=["right", "greedy"], default=None)
    align.add_argument("--align-iterations", type=int, default=10)

    rnn = _Parser(add_help=False)
    rnn.add_argument("--objective", choices=sorted(OBJECTIVES), default="transduction")
    rnn.add_argument("--hidden-dim", type=int, default=32)
    rnn.add_argument("--epochs", type=int, default=600)
    rnn.add_argument("--lr", type=float, default=1e-3)
    rnn.add_argument("--batch-size", type=int, default=32)
    rnn.add_argument("--dropout", type=float, default=0.0)
    rnn.add_argument("--lambda-sn", type=float, default=0.1)

    ext = _Parser(add_help=False)
    ext.add_argument("--k", type=int, default=50)
    ext.add_argument("--lambda-trans", type=_lambda, default=2)
    ext.add_argument("--classifier", choices=["svm", "logistic_regression"], default="svm")
    ext.add_argument("--synthetic", choices=["on", "off"], default="on")
    ext.add_argument("--pin-root", action="store_true")

    p = _Parser(prog="fst-forge", description="Transducer induction from RNN hidden states.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    sub.add_parser("align", parents=[common, data, align], help="write aligned training pairs")
    sub.add_parser("train", parents=[common, data, align, rnn], help="train an RNN transducer")
    e = sub.add_parser("extract", parents=[common, data, align, ext], help="extract an FST from a model")
    e.add_argument("--model", required=True)
    for name in ("ostia", "ddostia"):
        b = sub.add_parser(name, parents=[common, data], help=f"run {name.upper()}")
        b.add_argument("--time-limit", type=float, default=600.0)
    sub.add_parser("nochange", parents=[common, data], help="score the identity baseline")
    ev = sub.add_parser("eval", parents=[common, data], help="score a saved FST")
    ev.add_argument("--fst", required=True)
    ev.add_argument("--split", choices=["dev", "test"], default="dev")
    s = sub.add_parser("sweep", parents=[common, data, align], help="random search")
    s.add_argument("--objective", choices=sorted(OBJECTIVES), default="transduction")
    s.add_argument("--synthetic", choices=["on", "off"], default="on")
    s.add_argument("--lambda-sn", type=float, nargs="+", default=[0.1],
                   help="spectral penalty weights to sample from")
    s.add_argument("--hidden-dim", type=int, nargs="+", default=list(GRID_HIDDEN))
    s.add_argument("--epochs", type=int, nargs="+", default=list(GRID_EPOCHS))
    s.add_argument("--lr", type=float, nargs="+", default=list(GRID_LR))
    s.add_argument("--dropout", type=float, nargs="+", default=list(GRID_DROPOUT))
    s.add_argument("--budget", type=int, default=10)
    s.add_argument("--rnn-budget", type=int, default=None)
    s.add_argument("--workers", type=int, default=1)
    x = sub.add_parser("export", parents=[common], help="convert a saved FST")
    x.add_argument("fst")
    x.add_argument("--format", choices=["att_text", "dot"], default="dot")
    return p


def load_config(path: str) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    doc = json.loads(text) if path.endswith(".json") else yaml.safe_load(text)
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return {k.replace("-", "_"): v for k, v in doc.items()}


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            overrides = load_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        for k, v in overrides.items():
            if not hasattr(args, k):
                raise UsageError(f"config key {k!r} does not apply to {args.command}")
            setattr(args, k, v)
    return args


def _write(path: str | None, text: str):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")


def report(ds: Dataset, system: str, config: dict, dev, test, wall: float, flags=()) -> dict:
    return {
        "dataset": ds.name,
        "system": system,
        "config": config,
        "dev_accuracy": dev.accuracy if dev is not None else None,
        "test_accuracy": test.accuracy if test is not None else None,
        "states": (test or dev).states,
        "transitions": (test or dev).transitions,
        "wall_clock_s": wall,
        "flags": list(flags),
    }


def _emit(args, doc: dict, fst=None):
    """Report JSON goes to --out (or stdout); the FST to <out>.att alongside."""
    text = json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
    if args.out is None:
        sys.stdout.write(text)
        return
    out = Path(args.out)
    if out.suffix == "" or out.is_dir():
        out.mkdir(parents=True, exist_ok=True)
        _write(str(out / "report.json"), text)
        if fst is not None:
            _write(str(out / "best.att"), serialize(fst))
    else:
        _write(str(out), text)
        if fst is not None:
            _write(str(out.with_suffix(".att")), serialize(fst))


def _train_config(args) -> TrainConfig:
    return TrainConfig(hidden_dim=args.hidden_dim, lr=args.lr, dropout=args.dropout,
                       batch_size=args.batch_size, epochs=args.epochs, seed=args.seed,
                       lambda_sn=args.lambda_sn, objective=OBJECTIVES[args.objective])


def cmd_align(args):
    ds = load_dataset(args.dataset, args.task, sort_tags=args.sort_tags)
    aligned = align_pairs(ds, ds.train, args.align, args.align_iterations, args.seed)
    _write(args.out, "".join(format_alignment(a) + "\n" for a in aligned))


def cmd_train(args):
    ds = load_dataset(args.dataset, args.task, sort_tags=args.sort_tags)
    data = training_sequences(ds, args.align, args.merge, args.align_iterations, args.seed)
    cfg = _train_config(args)
    cfg.validate()
    m = train(data, cfg)
    if args.out is None:
        raise UsageError("train needs --out for the model checkpoint")
    save_model(m, args.out, cfg)


def cmd_extract(args):
    start = time.monotonic()
    ds = load_dataset(args.dataset, args.task, sort_tags=args.sort_tags)
    m = load_model(args.model)
    data = training_sequences(ds, args.align, args.merge, args.align_iterations, args.seed)
    syn = synthetic_inputs(ds, seed=args.seed) if args.synthetic == "on" else []
    cfg = ExtractionConfig(k=args.k, classifier=args.classifier, lambda_trans=args.lambda_trans,
                           seed=args.seed, pin_root=args.pin_root).validate()
    rep: dict = {}
    fst = extract(m, data, syn, cfg, rep)
    dev = evaluate(FstSystem(fst), ds.dev)
    rep["dev_accuracy"] = dev.accuracy
    doc = report(ds, "rnn-extraction", rep, dev, None, time.monotonic() - start, rep["flags"])
    _emit(args, doc, fst)


def cmd_baseline(args):
    start = time.monotonic()
    ds = load_dataset(args.dataset, args.task, sort_tags=args.sort_tags)
    if args.command == "nochange":
        dev = evaluate(no_change, ds.dev)
        test = evaluate(no_change, ds.test())
        _emit(args, report(ds, "no-change", {}, dev, test, time.monotonic() - start))
        return
    induce = ostia if args.command == "ostia" else dd_ostia
    info: dict = {}
    fst = induce([(p.input, p.output) for p in ds.train], args.time_limit, info)
    dev = evaluate(FstSystem(fst), ds.dev)
    test = evaluate(FstSystem(fst), ds.test())
    flags = ["time_limit_hit"] if info["time_limit_hit"] else []
    doc = report(ds, args.command, {"time_limit": args.time_limit, **info}, dev, test,
                 time.monotonic() - start, flags)
    _emit(args, doc, fst)


def cmd_eval(args):
    ds = load_dataset(args.dataset, args.task, sort_tags=args.sort_tags)
    fst = deserialize(Path(args.fst).read_text(encoding="utf-8"))
    pairs = ds.dev if args.split == "dev" else ds.test()
    r = evaluate(FstSystem(fst), pairs)
    _write(args.out, json.dumps({"dataset": ds.name, "split": args.split, **r.as_dict()},
                                indent=2, ensure_ascii=False) + "\n")


def cmd_sweep(args):
    ds = load_dataset(args.dataset, args.task, sort_tags=args.sort_tags)
    spec = SweepSpec(budget=args.budget, seed=args.seed, rnn_budget=args.rnn_budget,
                     objective=OBJECTIVES[args.objective], align=args.align,
                     align_iterations=args.align_iterations, merge=args.merge,
                     synthetic=args.synthetic == "on", workers=args.workers,
                     lambda_sn=tuple(args.lambda_sn), hidden=tuple(args.hidden_dim),
                     epochs=tuple(args.epochs), lr=tuple(args.lr), dropout=tuple(args.dropout))
    res = run_sweep(ds, spec)
    flags = sorted({f for t in res.trials for f in t.flags})
    config = {"sweep": spec.to_dict(), "train": res.train_config.to_dict(),
              "extraction": res.extraction_config.to_dict(),
              "trials": [t.__dict__ for t in res.trials]}
    doc = report(ds, "rnn-extraction", config, res.dev, res.test, res.wall_clock_s, flags)
    _emit(args, doc, res.fst)


def cmd_export(args):
    fst = deserialize(Path(args.fst).read_text(encoding="utf-8"))
    _write(args.out, serialize(fst, args.format))


COMMANDS = {
    "align": cmd_align, "train": cmd_train, "extract": cmd_extract,
    "ostia": cmd_baseline, "ddostia": cmd_baseline, "nochange": cmd_baseline,
    "eval": cmd_eval, "sweep": cmd_sweep, "export": cmd_export,
}


def main(argv=None) -> int:
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"fst-forge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"fst-forge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FstForgeError, OSError, ValueError) as exc:
        print(f"fst-forge: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
