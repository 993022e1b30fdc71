"""Command-line entry point: ``kehmode datagen | train | classify | evaluate``.

Every command takes ``--seed`` and ``--config`` (a JSON file of pipeline
parameters); explicit flags override the file. Failures print one JSON
object on stderr and exit with 2 (usage or configuration), 3 (data) or
4 (solver non-convergence). ``KEHMODE_OUT`` names the default output
directory when ``--out`` is omitted.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .classifier import FORMAT_VERSION, SrcModel, classify_trace, fit_model
from .config import PipelineConfig
from .errors import InvalidInputError, InvalidParameterError, KehModeError, NoSignalError
from .evaluation import (build_corpus, dump_json, make_plan, report_json, run_comparison,
                         sweep, write_sweep_csv)
from .signal import load_corpus, read_trace_csv
from .synthgen import GeneratorConfig, ModeProfile, default_config, generate_corpus

OUT_ENV = "KEHMODE_OUT"
CLASSIFIERS = ("src", "svm", "knn", "nb")

log = logging.getLogger("kehmode")

# flag name -> PipelineConfig field
_PIPELINE_FLAGS = {
    "window_seconds": "window_seconds",
    "overlap": "overlap",
    "span": "span",
    "threshold": "stationary_threshold",
    "prominence": "prominence_fraction",
    "band_mode": "band_mode",
    "bins": "bin_count",
    "select": "n_selected",
    "atoms": "atoms_per_class",
    "sparsity": "sparsity",
    "iterations": "ksvd_iterations",
    "init": "init",
    "dictionary": "dictionary_mode",
    "normalization": "normalization",
    "epsilon": "epsilon",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail(InvalidParameterError(f"{self.prog}: {message}", module="cli"))


def _fail(err: KehModeError):
    sys.stderr.write(json.dumps(err.to_json()) + "\n")
    sys.exit(err.exit_code)


def _threshold(text: str):
    if text == "auto":
        return None
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a positive number or 'auto'") from None
    return value


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_common(p):
    p.add_argument("--seed", type=int, default=None, help="seed for every random choice")
    p.add_argument("--config", type=Path, default=None, help="JSON file of pipeline parameters")
    p.add_argument("--log-level", default="WARNING",
                   choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def _add_pipeline(p):
    g = p.add_argument_group("pipeline")
    g.add_argument("--window-seconds", type=float)
    g.add_argument("--overlap", type=float)
    g.add_argument("--span", type=int, help="moving-average span in samples (odd)")
    g.add_argument("--threshold", type=_threshold, default=argparse.SUPPRESS,
                   help="stationary sigma threshold in volts, or 'auto'")
    g.add_argument("--prominence", type=float, help="peak prominence as a fraction of the range")
    g.add_argument("--band-mode", choices=["per_bin", "summed"])
    g.add_argument("--bins", type=int, help="equal-frequency bins for mutual information")
    g.add_argument("--select", type=int, help="number of ranked feature units kept")
    g.add_argument("--atoms", type=int, help="dictionary atoms per class")
    g.add_argument("--sparsity", type=int, help="OMP sparsity during dictionary learning")
    g.add_argument("--iterations", type=int, help="dictionary learning iterations")
    g.add_argument("--init", choices=["first", "random"])
    g.add_argument("--dictionary", choices=["ksvd", "raw"])
    g.add_argument("--normalization", choices=["scale", "zscore", "none"])
    g.add_argument("--epsilon", type=float, help="l1 solver residual tolerance")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kehmode",
                     description="Transport mode detection from energy-harvester voltage.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("datagen", help="write a synthetic labelled corpus")
    _add_common(p)
    p.add_argument("--out", type=Path)
    p.add_argument("--profiles", type=Path, help="JSON file replacing the default profiles")
    p.add_argument("--traces-per-mode", type=int)
    p.add_argument("--duration", type=float, help="trace duration in seconds")
    p.add_argument("--users", type=int)
    p.add_argument("--rate", type=float, help="sampling rate in Hz")
    p.add_argument("--gain-jitter", type=float, help="log-normal sigma of per-user gain")

    p = sub.add_parser("train", help="fit a model on a labelled manifest")
    _add_common(p)
    _add_pipeline(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, help="model file (default: <out dir>/model.json)")

    p = sub.add_parser("classify", help="label the windows of one trace or a manifest")
    _add_common(p)
    p.add_argument("--model", type=Path, required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--trace", type=Path, help="trace CSV (t_s,voltage_v)")
    src.add_argument("--manifest", type=Path)
    p.add_argument("--rate", type=float, default=None,
                   help="sampling rate of --trace in Hz (default: the model's)")
    p.add_argument("--out", type=Path)

    p = sub.add_parser("evaluate", help="cross-validate SRC against the baselines")
    _add_common(p)
    _add_pipeline(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--protocol", choices=["kfold", "trace", "user"], default="kfold")
    p.add_argument("--folds", type=int, default=10, help="fold count for --protocol kfold")
    p.add_argument("--classifiers", default="src,svm,knn,nb",
                   help="comma-separated subset of src,svm,knn,nb")
    p.add_argument("--sweep-window", type=_floats, default=None,
                   help="comma-separated window lengths in seconds")
    p.add_argument("--sweep-rate", type=_floats, default=None,
                   help="comma-separated sampling rates in Hz (integer divisors of the source)")
    p.add_argument("--out", type=Path)
    return parser


# --- helpers ------------------------------------------------------------

def _out_dir(args) -> Path:
    if args.out is not None:
        return args.out
    env = os.environ.get(OUT_ENV)
    if env:
        return Path(env)
    raise InvalidParameterError(f"--out is required (or set {OUT_ENV})", module="cli")


def _read_json(path: Path, what: str) -> dict:
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise InvalidInputError(f"cannot read {what} {path}: {exc}", module="cli") from exc
    except json.JSONDecodeError as exc:
        raise InvalidParameterError(f"{what} {path} is not valid JSON: {exc}", module="cli") from exc


def pipeline_config(args) -> PipelineConfig:
    """Defaults, then the --config file, then explicit flags, then --seed."""
    cfg = PipelineConfig()
    if args.config is not None:
        doc = _read_json(args.config, "config")
        if not isinstance(doc, dict):
            raise InvalidParameterError("config file must hold a JSON object", module="cli")
        doc = {k: v for k, v in doc.items() if k != "format_version"}
        cfg = PipelineConfig.from_json({**cfg.to_json(), **doc})
    changes = {}
    for flag, field_name in _PIPELINE_FLAGS.items():
        if flag in vars(args) and getattr(args, flag) is not None:
            changes[field_name] = getattr(args, flag)
    if "threshold" in vars(args):
        changes["stationary_threshold"] = args.threshold
    if args.seed is not None:
        changes["seed"] = args.seed
    return replace(cfg, **changes).validate()


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise InvalidInputError(f"cannot write {path}: {exc}", module="cli") from exc


def _labelled(traces):
    missing = [t.trace_id for t in traces if t.label is None]
    if missing:
        raise InvalidInputError(f"manifest entries without a mode: {missing[:5]}", module="cli")
    if len({t.label for t in traces}) < 2:
        raise InvalidInputError("need traces from at least two modes", module="cli")
    return traces


# --- commands -----------------------------------------------------------

def cmd_datagen(args) -> int:
    out = _out_dir(args)
    seed = 0 if args.seed is None else args.seed
    gen = default_config(seed=seed)
    if args.config is not None:
        doc = _read_json(args.config, "config")
        gen = replace(gen, **{k: v for k, v in doc.items()
                              if k in ("sampling_rate_hz", "trace_duration_s", "traces_per_mode",
                                       "users", "user_gain_jitter")})
    if args.profiles is not None:
        doc = _read_json(args.profiles, "profiles")
        raw = doc.get("profiles", doc)
        try:
            profiles = {m: ModeProfile(**p) for m, p in raw.items()}
        except TypeError as exc:
            raise InvalidParameterError(f"bad profile: {exc}", module="cli") from exc
        gen = replace(gen, profiles=profiles)
    overrides = {"traces_per_mode": args.traces_per_mode, "trace_duration_s": args.duration,
                 "users": args.users, "sampling_rate_hz": args.rate,
                 "user_gain_jitter": args.gain_jitter}
    gen: GeneratorConfig = replace(gen, **{k: v for k, v in overrides.items() if v is not None})
    gen.validate()
    manifest = generate_corpus(gen, out)
    print(manifest)
    return 0


def cmd_train(args) -> int:
    cfg = pipeline_config(args)
    traces = _labelled(load_corpus(args.manifest))
    corpus = build_corpus(traces, cfg)
    if len(set(corpus.labels)) < 2:
        raise InvalidInputError("fewer than two modes left after stop removal", module="cli")
    model = fit_model(corpus.windows, cfg, table=corpus.table,
                      stationary_threshold=corpus.stationary_threshold)
    path = args.out if args.out is not None else _out_dir(args) / "model.json"
    if path.suffix != ".json":
        path = path / "model.json"
    _write_text(path, model.dumps())
    print(path)
    return 0


def _load_model(path: Path) -> SrcModel:
    doc = _read_json(path, "model")
    try:
        return SrcModel.from_json(doc)
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"{path}: malformed model ({exc})", module="cli") from exc


def cmd_classify(args) -> int:
    model = _load_model(args.model)
    rate = model.feature_spec.sampling_rate_hz
    if args.trace is not None:
        trace = read_trace_csv(args.trace, args.rate or rate, trace_id=args.trace.stem)
        traces = [trace]
    else:
        traces = load_corpus(args.manifest)
    out = _out_dir(args)
    report, rows, failures = [], [], []
    for t in traces:
        entry = {"trace_id": t.trace_id, "label": t.label, "user_id": t.user_id}
        try:
            res = classify_trace(model, t)
        except NoSignalError as exc:
            if len(traces) == 1:
                raise
            entry["error"] = exc.to_json()
            failures.append(t.trace_id)
            report.append(entry)
            continue
        entry.update(majority=res.majority, votes=res.votes, windows=[])
        for i, r in enumerate(res.windows):
            w = {"index": i, "predicted": r.predicted, "low_confidence": r.low_confidence,
                 "residuals": dict(zip(model.class_list, (float(v) for v in r.residuals)))}
            entry["windows"].append(w)
            rows.append([t.trace_id, i, r.predicted, int(r.low_confidence)])
        report.append(entry)
    doc = {"format_version": FORMAT_VERSION, "model": str(args.model),
           "feature_spec_id": model.feature_spec.spec_id, "traces": report}
    _write_text(out / "predictions.json", json.dumps(doc, indent=1) + "\n")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "predictions.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trace_id", "window", "predicted", "low_confidence"])
        w.writerows(rows)
    print(out / "predictions.json")
    if failures:
        raise NoSignalError(f"no moving window in: {', '.join(failures)}", module="classifier")
    return 0


def _rate_factors(source_rate: float, rates: list[float]) -> list[int]:
    factors = []
    for r in rates:
        if not r > 0:
            raise InvalidParameterError(f"sampling rate must be positive, got {r}", module="cli")
        f = source_rate / r
        if abs(f - round(f)) > 1e-9 or round(f) < 1:
            raise InvalidParameterError(
                f"{r} Hz is not an integer divisor of the source rate {source_rate} Hz",
                module="cli")
        factors.append(int(round(f)))
    return factors


def cmd_evaluate(args) -> int:
    cfg = pipeline_config(args)
    choices = [c.strip() for c in args.classifiers.split(",") if c.strip()]
    bad = [c for c in choices if c not in CLASSIFIERS]
    if bad or not choices:
        raise InvalidParameterError(f"unknown classifiers {bad}", module="cli")
    if args.folds < 2:
        raise InvalidParameterError("--folds must be >= 2", module="cli")
    out = _out_dir(args)
    traces = _labelled(load_corpus(args.manifest))
    corpus = build_corpus(traces, cfg)
    plan = make_plan(corpus, args.protocol, args.folds, cfg.seed)
    reports = run_comparison(corpus, plan, choices, cfg)
    doc = report_json(reports, plan, cfg, corpus)
    out.mkdir(parents=True, exist_ok=True)
    for name, rep in reports.items():
        rep.confusion.to_csv(out / f"confusion_{name}.csv")
    if args.sweep_window or args.sweep_rate:
        factors = _rate_factors(traces[0].sampling_rate_hz, args.sweep_rate or [])
        rows = sweep(traces, cfg, protocol=args.protocol, window_seconds=args.sweep_window or [],
                     factors=factors, choices=choices, k=args.folds)
        write_sweep_csv(rows, out / "sweep.csv")
        doc["sweep"] = rows
    dump_json(doc, out / "report.json")
    print(out / "report.json")
    return 0


COMMANDS = {"datagen": cmd_datagen, "train": cmd_train, "classify": cmd_classify,
            "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except KehModeError as err:
        _fail(err)
    return 1  # unreachable


if __name__ == "__main__":
    sys.exit(main())
