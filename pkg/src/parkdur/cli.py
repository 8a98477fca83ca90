"""Command-line entry point: ``parkdur <command> ...``.

Commands: synth, train, evaluate, importance, explain, demand.

Seed derivation from the single ``--seed S``:

    synth      record sampling S (default: the seed stored in the SynthSpec file),
               hold-out choice S + 1
    train      fold assignment S + 2, network init S + 3 (+ fold + 1 for CV fits)
    explain    perturbations for case i (0-based) S + 4 + i

Every run writes one manifest (resolved configuration, SHA-256 of inputs,
artifact paths): to ``--manifest`` if given, else ``<out>.manifest.json``,
else to stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, demand, plot
from ._accel import BACKEND
from .dataset import (DURATION_CLASSES, ParseError, SchemaError, SpecError, apply_transform,
                      fit_transform, holdout_split, load_csv, load_schema, load_synth_spec,
                      records_to_csv_text, synthesize)
from .explain import LimeConfig, TrainingStats, explain_case, garson
from .model import ModelBundle, ModelFileError
from .network import TrainConfig, TrainingError, predict_labels
from .selection import Grid, confusion, grid_search, metrics

log = logging.getLogger("parkdur")

SYNTH_OFFSET, HOLDOUT_OFFSET, FOLD_OFFSET, INIT_OFFSET, LIME_OFFSET = 0, 1, 2, 3, 4


class CommandError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write(path, text):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _json(doc) -> str:
    return json.dumps(doc, indent=1) + "\n"


def _int_list(text):
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _float_list(text):
    try:
        out = [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


class Run:
    """Collects what a command read and wrote, then emits its manifest."""

    def __init__(self, args, command):
        self.args = args
        self.command = command
        self.inputs = {}
        self.artifacts = []
        self.config = {}

    def read(self, path):
        p = Path(path)
        if p.exists():
            self.inputs[str(path)] = _digest(p)

    def wrote(self, path):
        if path is not None:
            self.artifacts.append(str(path))

    def finish(self):
        doc = {"command": self.command, "version": __version__, "backend": BACKEND,
               "seed": self.config.get("seed"), "config": self.config,
               "inputs": self.inputs, "artifacts": self.artifacts}
        text = _json(doc)
        path = self.args.manifest
        if path is None and self.args.out is not None:
            path = f"{self.args.out}.manifest.json"
        if path is None:
            sys.stderr.write(text)
        else:
            _write(path, text)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_synth(args, run):
    run.read(args.spec)
    try:
        spec = load_synth_spec(args.spec)
    except FileNotFoundError:
        raise CommandError(f"spec not found: {args.spec}") from None
    if args.n is not None:
        spec.n = args.n
    if args.holdout and args.holdout_out is None:
        raise CommandError("--holdout needs --holdout-out")
    seed = spec.seed if args.seed is None else args.seed
    records = synthesize(spec, seed + SYNTH_OFFSET)
    held = []
    if args.holdout:
        keep, held = holdout_split(len(records), args.holdout, seed + HOLDOUT_OFFSET)
        held_records = [records[i] for i in held]
        records = [records[i] for i in keep]
    run.config = {"seed": seed, "n": spec.n, "holdout": args.holdout,
                  "holdout_rows": held, "spec": str(args.spec)}
    _write(args.out, records_to_csv_text(records, spec.schema))
    run.wrote(args.out)
    if args.holdout:
        _write(args.holdout_out, records_to_csv_text(held_records, spec.schema))
        run.wrote(args.holdout_out)
    if args.schema_out:
        _write(args.schema_out, _json(spec.schema.to_dict()))
        run.wrote(args.schema_out)


def _load_records(path, schema, run):
    run.read(path)
    try:
        records = load_csv(path, schema)
    except FileNotFoundError:
        raise CommandError(f"data file not found: {path}") from None
    if not records:
        raise CommandError(f"{path}: no data rows")
    return records


def cmd_train(args, run):
    seed = args.seed or 0
    run.read(args.schema)
    schema = load_schema(args.schema)
    records = _load_records(args.data, schema, run)
    if any(r.target is None for r in records):
        raise CommandError(f"{args.data}: every row needs a {schema.target_name} value")
    dm = fit_transform(records, schema)
    for w in dm.warnings:
        print(f"warning: {w}", file=sys.stderr)
    grid = Grid(sizes=args.sizes, decays=args.decays, k=args.folds, seed=seed + FOLD_OFFSET)
    cfg = TrainConfig(learning_rate=args.lr, max_iterations=args.max_iter,
                      grad_tolerance=args.tol, seed=seed + INIT_OFFSET)
    run.config = {"seed": seed, "schema": str(args.schema), "sizes": grid.sizes,
                  "decays": grid.decays, "folds": grid.k, "fold_seed": grid.seed,
                  "train": cfg.to_dict(), "jobs": args.jobs}

    def progress(size, decay, row):
        if args.verbose:
            print(f"  size={size:<3d} decay={decay:<6g} cv_accuracy={row.cv_accuracy:.4f}",
                  file=sys.stderr)

    report = grid_search(dm.data, dm.targets, grid, cfg, len(DURATION_CLASSES),
                         jobs=args.jobs, progress=progress)
    bundle = ModelBundle(report.network, dm.transform,
                         TrainingStats.from_training(records, dm), seed,
                         {"grid": {"sizes": grid.sizes, "decays": grid.decays, "k": grid.k,
                                   "seed": grid.seed},
                          "train": cfg.to_dict(), "best": list(report.best)})
    out = Path(args.out)
    report_path = args.report or str(out.with_suffix(".report.json"))
    curve_path = args.curve or str(out.with_suffix(".grid.csv"))
    bundle.save(out)
    run.wrote(out)
    _write(report_path, _json(report.to_dict()))
    run.wrote(report_path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["size", "decay", "cv_accuracy", "cv_kappa"])
    for r in report.rows:
        w.writerow([r.size, repr(r.decay), repr(r.cv_accuracy),
                    "" if r.cv_kappa is None else repr(r.cv_kappa)])
    _write(curve_path, buf.getvalue())
    run.wrote(curve_path)

    print(f"{'size':>4} {'decay':>7} {'cv_acc':>7} {'cv_kappa':>8}")
    for r in report.rows:
        mark = " *" if (r.size, r.decay) == report.best else ""
        k = "     nan" if r.cv_kappa is None else f"{r.cv_kappa:8.4f}"
        print(f"{r.size:>4} {r.decay:>7g} {r.cv_accuracy:7.4f} {k}{mark}")
    print(f"best: size={report.best[0]} decay={report.best[1]:g}  "
          f"train_accuracy={report.train_accuracy:.4f} train_kappa={report.train_kappa:.4f}")


def _load_model(path, run) -> ModelBundle:
    run.read(path)
    try:
        return ModelBundle.load(path)
    except FileNotFoundError:
        raise CommandError(f"model file not found: {path}") from None


def cmd_evaluate(args, run):
    bundle = _load_model(args.model, run)
    records = _load_records(args.data, bundle.transform.schema, run)
    if any(r.target is None for r in records):
        raise CommandError(f"{args.data}: every row needs an observed class")
    try:
        dm = apply_transform(records, bundle.transform)
    except ValueError as exc:
        raise CommandError(str(exc)) from None
    pred = predict_labels(bundle.network, dm.data)
    cm = confusion(dm.targets, pred, len(bundle.class_labels))
    doc = metrics(cm)
    doc["class_labels"] = list(bundle.class_labels)
    run.config = {"seed": bundle.seed}
    _write(args.out, _json(doc))
    run.wrote(args.out)


def _load_weights(path, run):
    """Weights for importance: any JSON with dims/w1/w2; full model files
    also supply column names."""
    run.read(path)
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        d_in, h, c = (int(v) for v in doc["dims"])
        W1 = np.array(doc["w1"], dtype=float)
        W2 = np.array(doc["w2"], dtype=float)
        if W1.shape != (h, d_in) or W2.shape != (c, h):
            raise ValueError("weight shapes disagree with dims")
        if not (np.isfinite(W1).all() and np.isfinite(W2).all()):
            raise ValueError("non-finite weights")
        names = doc.get("columns") or [f"x{i + 1}" for i in range(d_in)]
        if len(names) != d_in:
            raise ValueError("column names disagree with dims")
    except FileNotFoundError:
        raise CommandError(f"model file not found: {path}") from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"corrupt model file: {exc}") from None
    return W1, W2, names


def cmd_importance(args, run):
    W1, W2, names = _load_weights(args.model, run)
    table = garson((W1, W2), names)
    run.config = {"seed": None, "format": args.format}
    if args.format == "text":
        _write(args.out, table.as_text())
    else:
        _write(args.out, _json({"importance": table.to_dict()}))
    run.wrote(args.out)


def cmd_explain(args, run):
    seed = args.seed or 0
    bundle = _load_model(args.model, run)
    records = _load_records(args.cases, bundle.transform.schema, run)
    base = LimeConfig(n_samples=args.n_samples, kernel_width=args.kernel_width,
                      n_features=args.n_features, ridge_lambda=args.ridge, seed=0)
    run.config = {"seed": seed, "lime": base.to_dict(), "format": args.format,
                  "lime_seed_base": seed + LIME_OFFSET}
    results, failures = [], 0
    for i, rec in enumerate(records):
        cfg = LimeConfig(base.n_samples, base.kernel_width, base.n_features,
                         base.ridge_lambda, seed + LIME_OFFSET + i)
        try:
            e = explain_case(bundle.network, rec, bundle.transform, bundle.stats, cfg,
                             case_id=str(i + 1), class_labels=bundle.class_labels)
            results.append(e.to_dict())
        except ValueError as exc:
            failures += 1
            results.append({"case": str(i + 1), "error": str(exc)})
    if args.format == "json" or args.out is not None:
        _write(args.out, _json(results))
        run.wrote(args.out)
    if args.format in ("text", "svg") or args.plot is not None:
        render = plot.render_svg if args.format == "svg" else plot.render_text
        _write(args.plot, render(results))
        run.wrote(args.plot)
    if failures == len(results):
        raise CommandError("no case could be explained")


def cmd_demand(args, run):
    run.read(args.input)
    try:
        with open(args.input, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise CommandError(f"input not found: {args.input}") from None
    except json.JSONDecodeError as exc:
        raise CommandError(f"invalid JSON: {exc}") from None
    entries, coeff = demand.from_document(doc)
    if args.model == "static":
        value = demand.demand_static(entries)
    else:
        value = demand.demand_extended(entries, coeff)
    run.config = {"seed": None, "model": args.model}
    _write(args.out, _json({"demand": value}))
    run.wrote(args.out)


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--format", choices=("json", "text", "svg"), default=None)
    common.add_argument("--out", default=None, help="output path (default: stdout)")
    common.add_argument("--manifest", default=None, help="manifest path")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="parkdur", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic survey CSV")
    s.add_argument("spec", help="SynthSpec JSON path or bundled name (obp, msp)")
    s.add_argument("--n", type=int, default=None, help="override the row count in the SynthSpec file")
    s.add_argument("--holdout", type=int, default=0, help="rows to set aside")
    s.add_argument("--holdout-out", default=None)
    s.add_argument("--schema-out", default=None, help="also write the schema JSON")

    t = sub.add_parser("train", parents=[common], help="grid-search and fit a network")
    t.add_argument("data")
    t.add_argument("--schema", required=True, help="schema JSON path or bundled name")
    t.add_argument("--sizes", type=_int_list, default=list(range(1, 21)))
    t.add_argument("--decays", type=_float_list, default=[0.0, 0.001, 0.01, 0.1])
    t.add_argument("--folds", type=int, default=10)
    t.add_argument("--lr", type=float, default=0.1)
    t.add_argument("--max-iter", type=int, default=2000)
    t.add_argument("--tol", type=float, default=1e-5)
    t.add_argument("--jobs", type=int, default=1)
    t.add_argument("--report", default=None)
    t.add_argument("--curve", default=None, help="grid accuracy CSV")

    e = sub.add_parser("evaluate", parents=[common], help="confusion matrix and kappa")
    e.add_argument("model")
    e.add_argument("data")

    i = sub.add_parser("importance", parents=[common], help="Garson relative importance")
    i.add_argument("model")

    x = sub.add_parser("explain", parents=[common], help="LIME explanations")
    x.add_argument("model")
    x.add_argument("cases")
    x.add_argument("--n-samples", type=int, default=5000)
    x.add_argument("--kernel-width", type=float, default=None)
    x.add_argument("--n-features", type=int, default=4)
    x.add_argument("--ridge", type=float, default=1e-3)
    x.add_argument("--plot", default=None, help="feature plot path")

    d = sub.add_parser("demand", parents=[common], help="parking generation demand")
    d.add_argument("input")
    d.add_argument("--model", choices=("static", "extended"), default="static")
    return p


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "evaluate": cmd_evaluate,
            "importance": cmd_importance, "explain": cmd_explain, "demand": cmd_demand}

DEFAULT_FORMAT = {"importance": "text", "explain": "text"}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.format is None:
        args.format = DEFAULT_FORMAT.get(args.command, "json")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if args.command in ("synth", "train") and args.out is None:
        print(f"error: {args.command} needs --out", file=sys.stderr)
        return 2
    run = Run(args, args.command)
    try:
        COMMANDS[args.command](args, run)
    except (CommandError, ParseError, SchemaError, SpecError, ModelFileError,
            TrainingError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    run.finish()
    return 0


if __name__ == "__main__":
    sys.exit(main())
