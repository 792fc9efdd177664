"""Command-line entry point: ``qkdsent <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Log verbosity comes
from the ``QKDSENT_LOG`` environment variable (DEBUG, INFO, WARNING, ...).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, linksim, pipeline, report, selection
from .classify import TrainConfig
from .errors import QkdSentError
from .features import CATALOG, extract, write_feature_csv
from .linksim import CLASS_NAMES, N_CLASSES
from .telemetry import DEFAULT_WINDOW, Window, fit_scaler, iter_jsonl, read_log, write_log

log = logging.getLogger("qkdsent")

SCHEMA_VERSION = pipeline.SCHEMA_VERSION


class UsageError(Exception):
    pass


def _setup_logging():
    level = os.environ.get("QKDSENT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _write_json(path: Path, doc):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _stamp(seed, config: dict) -> dict:
    return {"schema_version": SCHEMA_VERSION, "seed": seed,
            "config_hash": pipeline.config_digest(config)}


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


# -- simulate ----------------------------------------------------------------

def cmd_simulate(args) -> int:
    link = linksim.LinkParams()
    if args.scenario:
        if args.class_id is not None:
            raise UsageError("--class and --scenario are mutually exclusive")
        doc = json.loads(Path(args.scenario).read_text(encoding="utf-8"))
        scenario = linksim.ScenarioConfig.from_dict(doc)
        if args.points is not None:
            scenario = replace(scenario, duration_points=args.points)
        if args.seed is not None:
            scenario = replace(scenario, seed=args.seed)
        jobs = [scenario]
    elif args.class_id is None:
        raise UsageError("one of --class or --scenario is required")
    else:
        points = args.points or 1000
        seed = 0 if args.seed is None else args.seed
        if args.class_id == "all":
            jobs = [linksim.preset(c, duration_points=points, seed=linksim.class_seed(seed, c))
                    for c in range(N_CLASSES)]
        else:
            jobs = [linksim.preset(int(args.class_id), duration_points=points, seed=seed)]

    out = Path(args.out)
    ext = "." + args.format
    if len(jobs) > 1 or out.suffix == "":
        out.mkdir(parents=True, exist_ok=True)
        targets = [out / f"class{s.class_id}{ext}" for s in jobs]
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        targets = [out]
    print(f"{'class':>5}  {'name':<28}{'points':>7}{'mean QBER':>11}{'mean SKR':>13}")
    for scenario, path in zip(jobs, targets):
        records = linksim.simulate(link, scenario)
        write_log(path, records, args.format)
        _write_json(pipeline.sidecar_path(path), linksim.sidecar(link, scenario, SCHEMA_VERSION))
        q = np.mean([r.qber for r in records])
        s = np.mean([r.skr for r in records])
        print(f"{scenario.class_id:>5}  {CLASS_NAMES[scenario.class_id]:<28}"
              f"{len(records):>7}{q:>11.5f}{s:>13.4g}")
        log.info("wrote %s", path)
    return 0


# -- extract -----------------------------------------------------------------

def cmd_extract(args) -> int:
    records = read_log(args.input)
    ref = read_log(args.reference) if args.reference else records
    if len(ref) < args.window:
        raise QkdSentError(f"reference has {len(ref)} samples, need {args.window}")
    scaler = fit_scaler(Window(tuple(ref[:args.window])), args.window)
    side = pipeline.sidecar_path(args.input)
    label = json.loads(side.read_text(encoding="utf-8"))["label"] if side.exists() else None
    ds = pipeline.build_dataset([(records, label)], args.window, args.stride)
    vectors = [extract(w, scaler, args.window) for w in ds.windows]
    labels = None if label is None else [label] * len(vectors)
    config = {"window_size": args.window, "stride": args.stride, "scaler": scaler.to_dict(),
              "input": Path(args.input).name}
    meta = {**_stamp(args.seed, config), "n_windows": len(vectors), "features": list(CATALOG),
            "config": config}
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.format == "csv":
        write_feature_csv(out, vectors, labels)
        _write_json(out.with_name(out.stem + ".meta.json"), meta)
    else:
        with out.open("w", encoding="utf-8") as fh:
            fh.write(json.dumps({"meta": meta}, sort_keys=True) + "\n")
            for i, (w, fv) in enumerate(zip(ds.windows, vectors)):
                row = {"ts": w.last_ts, "label": label, "features": fv.values}
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    print(f"{len(vectors)} windows x {len(CATALOG)} features -> {out}")
    return 0


# -- train / eval --------------------------------------------------------------

def _corpus_split(corpus, window):
    logs = pipeline.load_corpus(corpus)
    pairs = [(recs, label) for recs, label, _ in logs]
    ds = pipeline.build_dataset(pairs, window)
    split = pipeline.temporal_split(ds.windows)
    return logs, split


def _evaluate_bundle(model, windows, out_dir, stem, extra):
    y = [w.label for w in windows]
    pred, _ = model.predict_windows(windows)
    rep = report.evaluate(y, pred.tolist(), model.class_names)
    base, _ = model.baseline_predict(windows)
    base_rep = report.evaluate(y, base.tolist(), model.class_names)
    rep.extra = {**extra,
                 "baseline_gbdt": {"macro_f1": base_rep.macro_f1, "accuracy": base_rep.accuracy,
                                   "f1": base_rep.f1},
                 "n_test": len(windows)}
    paths = report.write_report_bundle(rep, out_dir, stem, model.mlp.loss_trace)
    return rep, base_rep, paths


def _print_summary(rep, base_rep, k):
    print(rep.table())
    print()
    print(f"pipeline (GBDT top-{k} + MLP): macro F1 {rep.macro_f1:.4f}  accuracy {rep.accuracy:.4f}")
    print(f"GBDT baseline (all features):  macro F1 {base_rep.macro_f1:.4f}  "
          f"accuracy {base_rep.accuracy:.4f}")


def cmd_train(args) -> int:
    logs, split = _corpus_split(args.corpus, args.window)
    scaler = pipeline.reference_scaler(logs, args.window)
    boost = selection.BoostParams(rounds=args.rounds)
    mlp_cfg = TrainConfig(epochs=args.epochs, seed=args.seed)
    model = pipeline.fit_pipeline(split.train, scaler, k=args.k, boost_params=boost,
                                  mlp_config=mlp_cfg, window_size=args.window)
    model.config["seed"] = args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model_path = out / "model.json"
    model.save(model_path)
    extra = {**_stamp(args.seed, model.config), "k": args.k,
             "dropped_train_windows": {str(c): n for c, n in split.dropped.items()}}
    rep, base_rep, paths = _evaluate_bundle(model, split.test, out, "report", extra)
    _print_summary(rep, base_rep, args.k)
    print(f"model -> {model_path}; report -> {paths['json']}")
    return 0


def cmd_eval(args) -> int:
    model = pipeline.TrainedPipeline.load(args.model)
    logs, split = _corpus_split(args.corpus, model.window_size)
    windows = split.test
    if args.all_windows:
        pairs = [(recs, label) for recs, label, _ in logs]
        windows = pipeline.build_dataset(pairs, model.window_size).windows
    extra = {**_stamp(model.config.get("seed"), model.config), "k": len(model.selected_features),
             "windows": "all" if args.all_windows else "test"}
    rep, base_rep, paths = _evaluate_bundle(model, windows, Path(args.out), "eval", extra)
    _print_summary(rep, base_rep, len(model.selected_features))
    print(f"report -> {paths['json']}")
    return 0


# -- predict / chord -------------------------------------------------------------

def _input_records(path, fmt):
    if path in (None, "-"):
        if fmt == "csv":
            raise UsageError("stdin input must be JSONL")
        return iter_jsonl(sys.stdin)
    return iter(read_log(path, fmt))


def cmd_predict(args) -> int:
    model = pipeline.TrainedPipeline.load(args.model)
    stream = pipeline.StreamPredictor(model)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for rec in _input_records(args.input, args.format):
            res = stream.push(rec)
            if res is None:
                row = {"ts": rec.timestamp, "status": "warmup"}
            else:
                cls, probs = res
                row = {"ts": rec.timestamp, "class": cls, "class_name": model.class_names[cls],
                       "probs": [float(p) for p in probs]}
            out.write(json.dumps(row) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_chord(args) -> int:
    rep = report.EvalReport.read_json(args.report)
    path = report.render_chord(rep, args.out)
    print(f"{len(rep.chord_edges)} ribbons, {rep.misclassified} misclassified -> {path}")
    return 0


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qkdsent",
                                description="QKD link impairment classification from QBER/SKR telemetry")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate labeled telemetry from a preset or scenario")
    s.add_argument("--class", dest="class_id", choices=[str(c) for c in range(N_CLASSES)] + ["all"],
                   help="preset class id, or 'all' for a 9-class corpus directory")
    s.add_argument("--scenario", help="scenario JSON file")
    s.add_argument("--points", type=_positive, help="samples per log (default 1000)")
    s.add_argument("--seed", type=int)
    s.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")
    s.add_argument("--out", required=True, help="log file, or directory for --class all")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("extract", help="feature table for every window of one log")
    e.add_argument("input")
    e.add_argument("--reference", help="log whose first N samples fix the scaler (default: input)")
    e.add_argument("--window", type=_positive, default=DEFAULT_WINDOW)
    e.add_argument("--stride", type=_positive, default=1)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--format", choices=["jsonl", "csv"], default="csv")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_extract)

    t = sub.add_parser("train", help="fit the pipeline on a labeled corpus and report on its tail")
    t.add_argument("corpus", help="directory of logs with .label.json sidecars")
    t.add_argument("--k", type=_positive, default=pipeline.DEFAULT_K)
    t.add_argument("--window", type=_positive, default=DEFAULT_WINDOW)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--epochs", type=_positive, default=TrainConfig.epochs)
    t.add_argument("--rounds", type=_positive, default=selection.BoostParams.rounds)
    t.add_argument("--out", required=True, help="output directory")
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("eval", help="evaluate a saved model on a corpus")
    v.add_argument("corpus")
    v.add_argument("--model", required=True)
    v.add_argument("--all-windows", action="store_true",
                   help="score every window instead of the held-out tail")
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_eval)

    r = sub.add_parser("predict", help="stream predictions as JSON lines")
    r.add_argument("input", nargs="?", default="-", help="log file or '-' for stdin JSONL")
    r.add_argument("--model", required=True)
    r.add_argument("--format", choices=["jsonl", "csv"])
    r.add_argument("--out", help="write JSON lines here instead of stdout")
    r.set_defaults(func=cmd_predict)

    c = sub.add_parser("chord", help="render the misclassification chord SVG of a report")
    c.add_argument("report", help="report JSON written by train/eval")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_chord)
    return p


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "train" and args.k > len(CATALOG):
        parser.error(f"--k must be <= {len(CATALOG)}")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"qkdsent: error: {exc}", file=sys.stderr)
        return 2
    except (QkdSentError, OSError, ValueError, KeyError) as exc:
        log.debug("failure", exc_info=True)
        print(f"qkdsent: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
