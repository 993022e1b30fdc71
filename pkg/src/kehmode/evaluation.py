"""Cross-validation protocols, baseline classifiers and report writers."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import stats
from sklearn.svm import LinearSVC

from .classifier import classify, order_classes, train
from .config import PipelineConfig
from .errors import InvalidInputError, InvalidParameterError
from .features import FeatureSpec, FeatureTable, fit_thresholds
from .selection import select_features
from .signal import SegmentWindow, VoltageTrace, calibrate_threshold, preprocess

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
KNN_GRID = (1, 3, 5, 7, 9)
SVM_GRID = tuple(float(c) for c in np.logspace(-2, 2, 5))
NB_VAR_FLOOR = 1e-9
BASELINES = ("svm", "knn", "nb")


# --- data containers ----------------------------------------------------

@dataclass(eq=False)
class WindowCorpus:
    """Windows cut from a set of traces with their cached candidate features."""

    windows: list[SegmentWindow]
    table: FeatureTable
    stationary_threshold: float
    config: PipelineConfig

    def __len__(self) -> int:
        return len(self.windows)

    @property
    def labels(self) -> np.ndarray:
        return self.table.labels


def build_corpus(traces: Sequence[VoltageTrace], config: PipelineConfig | None = None,
                 stationary_threshold: float | None = None) -> WindowCorpus:
    config = (config or PipelineConfig()).validate()
    if not traces:
        raise InvalidInputError("empty corpus", module="eval")
    rates = {t.sampling_rate_hz for t in traces}
    if len(rates) != 1:
        raise InvalidInputError(f"mixed sampling rates {sorted(rates)}", module="eval")
    threshold = stationary_threshold or config.stationary_threshold
    if threshold is None:
        threshold = calibrate_threshold(traces, config.span)
    windows = []
    for t in traces:
        windows.extend(preprocess(t, config.span, threshold, config.window_seconds, config.overlap))
    spec = FeatureSpec(config.window_seconds, rates.pop(),
                       prominence_fraction=config.prominence_fraction, band_mode=config.band_mode)
    return WindowCorpus(windows, FeatureTable(windows, spec), threshold, config)


@dataclass
class SplitPlan:
    folds: list[tuple[np.ndarray, np.ndarray]]
    grouping: str

    def check(self, windows: Sequence[SegmentWindow] | None = None) -> None:
        for train_ids, test_ids in self.folds:
            if np.intersect1d(train_ids, test_ids).size:
                raise InvalidInputError("train and test overlap", module="eval")
            if windows is not None and self.grouping in ("by-trace", "by-user"):
                key = _group_key(self.grouping)
                tr = {key(windows[i]) for i in train_ids}
                te = {key(windows[i]) for i in test_ids}
                if tr & te:
                    raise InvalidInputError("a group spans train and test", module="eval")


@dataclass
class ConfusionMatrix:
    counts: np.ndarray
    class_list: list[str]

    @classmethod
    def empty(cls, class_list: Sequence[str]) -> "ConfusionMatrix":
        k = len(class_list)
        return cls(np.zeros((k, k), dtype=np.int64), list(class_list))

    def add(self, truth: Sequence[str], predicted: Sequence[str]) -> None:
        idx = {c: i for i, c in enumerate(self.class_list)}
        for t, p in zip(truth, predicted):
            self.counts[idx[t], idx[p]] += 1

    @property
    def accuracy(self) -> float:
        total = self.counts.sum()
        return float(np.trace(self.counts) / total) if total else 0.0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["true\\predicted"] + self.class_list)
            for c, row in zip(self.class_list, self.counts):
                w.writerow([c] + [int(v) for v in row])


@dataclass
class ExperimentReport:
    classifier: str
    confusion: ConfusionMatrix
    fold_accuracies: list[float]
    skipped_folds: list[int] = field(default_factory=list)
    low_confidence: int = 0

    @property
    def accuracy(self) -> float:
        return self.confusion.accuracy

    @property
    def mean_fold_accuracy(self) -> float:
        return float(np.mean(self.fold_accuracies)) if self.fold_accuracies else 0.0

    @property
    def ci_half_width(self) -> float:
        return t_interval(self.fold_accuracies)

    def to_json(self) -> dict:
        return {
            "classifier": self.classifier,
            "accuracy": self.accuracy,
            "mean_fold_accuracy": self.mean_fold_accuracy,
            "ci95_half_width": self.ci_half_width,
            "fold_accuracies": self.fold_accuracies,
            "skipped_folds": self.skipped_folds,
            "low_confidence_windows": self.low_confidence,
            "class_list": self.confusion.class_list,
            "confusion": self.confusion.counts.tolist(),
        }


def t_interval(values: Sequence[float], level: float = 0.95) -> float:
    """Half-width of the Student-t confidence interval for the mean."""
    k = len(values)
    if k < 2:
        return 0.0
    sem = float(np.std(values, ddof=1)) / np.sqrt(k)
    return float(stats.t.ppf(0.5 + level / 2, k - 1) * sem)


# --- split plans -------------------------------------------------------------

def kfold(windows: Sequence, k: int = 10, seed: int = 0) -> SplitPlan:
    n = len(windows)
    if k < 2 or k > n:
        raise InvalidParameterError(f"k must be in [2, {n}], got {k}", module="eval")
    perm = np.random.default_rng(seed).permutation(n)
    tests = np.array_split(perm, k)
    folds = [(np.sort(np.concatenate(tests[:i] + tests[i + 1:])), np.sort(t))
             for i, t in enumerate(tests)]
    return SplitPlan(folds, "random-window")


def _group_key(grouping: str) -> Callable:
    if grouping in ("trace", "by-trace"):
        return lambda w: w.trace_id
    if grouping in ("user", "by-user"):
        return lambda w: w.user_id
    raise InvalidParameterError(f"unknown grouping {grouping!r}", module="eval")


def grouped_splits(windows: Sequence[SegmentWindow], group_key: str) -> SplitPlan:
    """One fold per trace or user id, holding that group out."""
    key = _group_key(group_key)
    ids = np.array([key(w) for w in windows], dtype=object)
    groups = sorted(set(ids))
    if len(groups) < 2:
        raise InvalidInputError("grouped splits need at least two groups", module="eval")
    folds = [(np.flatnonzero(ids != g), np.flatnonzero(ids == g)) for g in groups]
    return SplitPlan(folds, "by-trace" if group_key in ("trace", "by-trace") else "by-user")


def downsample(trace: VoltageTrace, factor: int) -> VoltageTrace:
    """Keep every ``factor``-th sample."""
    if factor < 1 or int(factor) != factor:
        raise InvalidParameterError(f"factor must be a positive integer, got {factor}",
                                    module="eval")
    factor = int(factor)
    return trace.with_samples(trace.samples[::factor].copy(),
                              sampling_rate_hz=trace.sampling_rate_hz / factor)


# --- baselines -----------------------------------------------------------

def _knn_predict(Xtr, ytr, Xte, k):
    d = ((Xte[:, None, :] - Xtr[None, :, :]) ** 2).sum(axis=2)
    nearest = np.argsort(d, axis=1, kind="stable")[:, :k]
    out = []
    for row, nn in zip(d, nearest):
        labels = ytr[nn]
        classes, counts = np.unique(labels, return_counts=True)
        tied = set(classes[counts == counts.max()])
        # tie: the tied class with the closest member wins
        out.append(next(ytr[j] for j in nn if ytr[j] in tied))
    return np.array(out, dtype=object)


def _nb_predict(Xtr, ytr, Xte):
    classes = order_classes(ytr)
    scores = []
    for c in classes:
        Xc = Xtr[ytr == c]
        mu = Xc.mean(axis=0)
        var = np.maximum(Xc.var(axis=0), NB_VAR_FLOOR)
        ll = -0.5 * (np.log(2 * np.pi * var) + (Xte - mu) ** 2 / var).sum(axis=1)
        scores.append(ll + np.log(len(Xc) / len(Xtr)))
    return np.array(classes, dtype=object)[np.argmax(np.vstack(scores), axis=0)]


def _svm_predict(Xtr, ytr, Xte, C, seed):
    model = LinearSVC(C=C, dual="auto", max_iter=20000, random_state=seed)
    model.fit(Xtr, ytr.astype(str))
    return model.predict(Xte).astype(object)


def _inner_split(y: np.ndarray, seed: int, fraction: float = 0.2):
    rng = np.random.default_rng(seed)
    val = []
    for c in order_classes(y):
        idx = np.flatnonzero(y == c)
        take = max(1, int(round(fraction * idx.size))) if idx.size > 1 else 0
        val.extend(rng.permutation(idx)[:take])
    val = np.sort(np.array(val, dtype=np.intp))
    tr = np.setdiff1d(np.arange(y.size), val)
    return tr, val


def baselines(train_X: np.ndarray, train_y, test_X: np.ndarray, which: str, *,
              param=None, tune: bool = True, seed: int = 0) -> np.ndarray:
    """Reference classifiers: ``knn`` (Euclidean), ``nb`` (Gaussian), ``svm`` (linear).

    Without an explicit ``param`` the kNN k and SVM C are picked on an
    inner stratified validation split, ties to the first grid value.
    """
    Xtr = np.asarray(train_X, dtype=np.float64)
    ytr = np.asarray(train_y, dtype=object)
    Xte = np.asarray(test_X, dtype=np.float64)
    if which == "nb":
        return _nb_predict(Xtr, ytr, Xte)
    if which == "knn":
        fit = lambda a, b, c, p: _knn_predict(a, b, c, min(p, len(a)))  # noqa: E731
        grid, default = KNN_GRID, 5
    elif which == "svm":
        fit = lambda a, b, c, p: _svm_predict(a, b, c, p, seed)  # noqa: E731
        grid, default = SVM_GRID, 1.0
    else:
        raise InvalidParameterError(f"unknown baseline {which!r}", module="eval")
    if param is None:
        param = default
        if tune and len(set(ytr)) > 1:
            tr, val = _inner_split(ytr, seed)
            if val.size and len(set(ytr[tr])) > 1:
                accs = [np.mean(fit(Xtr[tr], ytr[tr], Xtr[val], p) == ytr[val]) for p in grid]
                param = grid[int(np.argmax(accs))]
    return fit(Xtr, ytr, Xte, param)


# --- experiments --------------------------------------------------------------

@dataclass(eq=False)
class FoldData:
    train_X: np.ndarray
    train_y: np.ndarray
    test_X: np.ndarray
    test_y: np.ndarray
    feature_names: list[str]


def prepare_fold(corpus: WindowCorpus, train_ids, test_ids) -> FoldData:
    """Refit thresholds, selection and normalization on the training side only."""
    cfg = corpus.config
    table = corpus.table
    train_ids, test_ids = np.asarray(train_ids), np.asarray(test_ids)
    thresholds = fit_thresholds([table.windows[i] for i in train_ids])
    Xtr = table.with_thresholds(thresholds, train_ids)
    Xte = table.with_thresholds(thresholds, test_ids)
    ytr, yte = table.labels[train_ids], table.labels[test_ids]
    _, columns = select_features(Xtr, ytr, table.names, cfg.n_selected, cfg.bin_count)
    idx = [table.names.index(c) for c in columns]
    return FoldData(Xtr[:, idx], ytr, Xte[:, idx], yte, columns)


def _standardize(fold: FoldData):
    loc = fold.train_X.mean(axis=0)
    scale = fold.train_X.std(axis=0)
    keep = scale > 1e-12 * np.maximum(1.0, np.abs(loc))
    return ((fold.train_X[:, keep] - loc[keep]) / scale[keep],
            (fold.test_X[:, keep] - loc[keep]) / scale[keep])


def _predict(choice, fold: FoldData, config: PipelineConfig):
    """Predictions and low-confidence count for one classifier on one fold."""
    if callable(choice):
        return np.asarray(choice(fold), dtype=object), 0
    if choice == "src":
        classes = order_classes(fold.train_y)
        model = train({c: fold.train_X[fold.train_y == c] for c in classes}, config,
                      fold.feature_names)
        keep = [fold.feature_names.index(n) for n in model.feature_names]
        results = [classify(model, v[keep]) for v in fold.test_X]
        return (np.array([r.predicted for r in results], dtype=object),
                sum(r.low_confidence for r in results))
    Xtr, Xte = _standardize(fold)
    return baselines(Xtr, fold.train_y, Xte, choice, seed=config.seed), 0


def run_comparison(corpus: WindowCorpus, plan: SplitPlan, choices: Sequence,
                   config: PipelineConfig | None = None) -> dict[str, ExperimentReport]:
    """Run several classifiers over the same folds and fold-level preprocessing."""
    config = (config or corpus.config).validate()
    plan.check(corpus.windows)
    class_list = order_classes(corpus.labels)
    names = [c if isinstance(c, str) else getattr(c, "__name__", "custom") for c in choices]
    reports = {n: ExperimentReport(n, ConfusionMatrix.empty(class_list), []) for n in names}
    for f, (train_ids, test_ids) in enumerate(plan.folds):
        if set(corpus.labels[train_ids]) != set(class_list):
            log.warning("fold %d: training side misses a class; skipped", f)
            for r in reports.values():
                r.skipped_folds.append(f)
            continue
        fold = prepare_fold(corpus, train_ids, test_ids)
        for name, choice in zip(names, choices):
            pred, low = _predict(choice, fold, config)
            rep = reports[name]
            rep.confusion.add(fold.test_y, pred)
            rep.fold_accuracies.append(float(np.mean(pred == fold.test_y)))
            rep.low_confidence += low
    return reports


def run_experiment(corpus: WindowCorpus, plan: SplitPlan, config: PipelineConfig | None = None,
                   classifier_choice="src") -> ExperimentReport:
    return next(iter(run_comparison(corpus, plan, [classifier_choice], config).values()))


def make_plan(corpus: WindowCorpus, protocol: str, k: int = 10, seed: int = 0) -> SplitPlan:
    if protocol == "kfold":
        return kfold(corpus.windows, k, seed)
    if protocol in ("trace", "user"):
        return grouped_splits(corpus.windows, protocol)
    raise InvalidParameterError(f"unknown protocol {protocol!r}", module="eval")


def scaled_span(span: int, factor: int) -> int:
    """Odd span covering about the same duration at a rate lowered by ``factor``."""
    s = max(1, int(round(span / factor)))
    return s if s % 2 else s + 1 if s > 1 else 1


def sweep(traces: Sequence[VoltageTrace], config: PipelineConfig, *, protocol: str = "kfold",
          window_seconds: Sequence[float] = (), factors: Sequence[int] = (),
          choices: Sequence = ("src",), k: int = 10) -> list[dict]:
    """Accuracy rows over window sizes and/or downsampling factors."""
    rows = []
    for T in window_seconds:
        cfg = replace(config, window_seconds=float(T))
        corpus = build_corpus(traces, cfg)
        reports = run_comparison(corpus, make_plan(corpus, protocol, k, cfg.seed), choices, cfg)
        rows += [_sweep_row("window_seconds", T, corpus, r) for r in reports.values()]
    for f in factors:
        cfg = replace(config, span=scaled_span(config.span, f))
        low = [downsample(t, f) for t in traces]
        corpus = build_corpus(low, cfg)
        reports = run_comparison(corpus, make_plan(corpus, protocol, k, cfg.seed), choices, cfg)
        rows += [_sweep_row("sampling_rate_hz", low[0].sampling_rate_hz, corpus, r)
                 for r in reports.values()]
    return rows


def _sweep_row(kind, value, corpus, report):
    return {"sweep": kind, "value": float(value), "classifier": report.classifier,
            "windows": len(corpus), "accuracy": report.accuracy,
            "mean_fold_accuracy": report.mean_fold_accuracy,
            "ci95_half_width": report.ci_half_width}


def write_sweep_csv(rows: Sequence[dict], path) -> None:
    cols = ["sweep", "value", "classifier", "windows", "accuracy", "mean_fold_accuracy",
            "ci95_half_width"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({c: (repr(r[c]) if isinstance(r[c], float) else r[c]) for c in cols})


def report_json(reports: dict[str, ExperimentReport], plan: SplitPlan, config: PipelineConfig,
                corpus: WindowCorpus, extra: dict | None = None) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "protocol": plan.grouping,
        "folds": len(plan.folds),
        "windows": len(corpus),
        "stationary_threshold": corpus.stationary_threshold,
        "config": config.to_json(),
        "results": {k: r.to_json() for k, r in reports.items()},
    }
    if extra:
        doc.update(extra)
    return doc


def dump_json(doc, path) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(doc, indent=1) + "\n")
