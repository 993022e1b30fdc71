"""Sparse-representation classifier: per-class dictionaries and residual argmin."""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .config import PipelineConfig
from .errors import InvalidInputError, NoSignalError, NonConvergenceError
from .features import FeatureSpec, FeatureTable, extract_all, fit_thresholds
from .selection import SelectionResult, select_features
from .signal import MODES, SegmentWindow, VoltageTrace, preprocess
from .sparse import ClassDictionary, SparseCode, StackedDictionary, bpdn_solve, ksvd_train

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
SCALE_FLOOR = 1e-12


@dataclass(eq=False)
class SrcModel:
    stacked: StackedDictionary
    class_list: list[str]
    feature_names: list[str]
    location: np.ndarray
    scale: np.ndarray
    epsilon: float
    dropped_features: list[str] = field(default_factory=list)
    feature_spec: FeatureSpec | None = None
    selection: SelectionResult | None = None
    stationary_threshold: float | None = None
    config: PipelineConfig = field(default_factory=PipelineConfig)

    def normalize(self, v: np.ndarray) -> np.ndarray:
        return (np.asarray(v, dtype=np.float64) - self.location) / self.scale

    def to_json(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "class_list": self.class_list,
            "feature_names": self.feature_names,
            "dropped_features": self.dropped_features,
            "normalization": {"location": [float(v) for v in self.location],
                              "scale": [float(v) for v in self.scale]},
            "epsilon": self.epsilon,
            "stationary_threshold": self.stationary_threshold,
            "feature_spec": self.feature_spec.to_json() if self.feature_spec else None,
            "selection": self.selection.to_json() if self.selection else None,
            "stacked": self.stacked.to_json(),
            "config": self.config.to_json(),
            "seed": self.config.seed,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1) + "\n"

    @classmethod
    def from_json(cls, d: dict) -> "SrcModel":
        if d.get("format_version") != FORMAT_VERSION:
            raise InvalidInputError(f"unsupported model format_version {d.get('format_version')}",
                                    module="classifier")
        return cls(
            stacked=StackedDictionary.from_json(d["stacked"]),
            class_list=list(d["class_list"]),
            feature_names=list(d["feature_names"]),
            location=np.array(d["normalization"]["location"], dtype=np.float64),
            scale=np.array(d["normalization"]["scale"], dtype=np.float64),
            epsilon=float(d["epsilon"]),
            dropped_features=list(d["dropped_features"]),
            feature_spec=FeatureSpec.from_json(d["feature_spec"]) if d["feature_spec"] else None,
            selection=SelectionResult.from_json(d["selection"]) if d["selection"] else None,
            stationary_threshold=d["stationary_threshold"],
            config=PipelineConfig.from_json(d["config"]),
        )


@dataclass(eq=False)
class ClassificationResult:
    predicted: str
    residuals: np.ndarray
    code: SparseCode
    low_confidence: bool = False


def order_classes(labels) -> list[str]:
    """Known modes in canonical order, then any others sorted."""
    present = set(labels)
    return [m for m in MODES if m in present] + sorted(present - set(MODES))


def train(features_by_class: Mapping[str, np.ndarray], config: PipelineConfig | None = None,
          names: Sequence[str] | None = None) -> SrcModel:
    """Fit normalization and one dictionary per class.

    Each matrix holds one feature vector per row. Zero-variance features
    are dropped; a class with fewer vectors than the atom budget gets a
    smaller dictionary.
    """
    config = (config or PipelineConfig()).validate()
    if len(features_by_class) < 2:
        raise InvalidInputError("training needs at least two classes", module="classifier")
    class_list = order_classes(features_by_class)
    mats = {c: np.atleast_2d(np.asarray(features_by_class[c], dtype=np.float64))
            for c in class_list}
    dims = {m.shape[1] for m in mats.values()}
    if len(dims) != 1:
        raise InvalidInputError("classes disagree on feature count", module="classifier")
    for c, m in mats.items():
        if m.shape[0] < 1:
            raise InvalidInputError(f"class {c!r} has no training vectors", module="classifier")
    dim = dims.pop()
    names = list(names) if names is not None else [f"f{i}" for i in range(dim)]
    pooled = np.vstack(list(mats.values()))
    if config.normalization != "none":
        # "scale" divides by the spread without centering, which keeps each
        # class near a subspace through the origin; "zscore" also centers
        mean = pooled.mean(axis=0)
        scale = pooled.std(axis=0)
        keep = scale > SCALE_FLOOR * np.maximum(1.0, np.abs(mean))
        loc = mean if config.normalization == "zscore" else np.zeros(dim)
    else:
        loc = np.zeros(dim)
        scale = np.ones(dim)
        keep = np.ptp(pooled, axis=0) > 0
    dropped = [n for n, k in zip(names, keep) if not k]
    if dropped:
        log.warning("dropping zero-variance features: %s", ", ".join(dropped))
    if not np.any(keep):
        raise InvalidInputError("every feature has zero variance", module="classifier")
    loc, scale = loc[keep], scale[keep]
    dictionaries = []
    for c in class_list:
        S = ((mats[c][:, keep] - loc) / scale).T
        if config.dictionary_mode == "raw":
            norms = np.linalg.norm(S, axis=0)
            dictionaries.append(ClassDictionary(S[:, norms > 0], c))
            continue
        K = config.atoms_per_class
        if S.shape[1] < K:
            log.warning("class %s: shrinking dictionary from %d to %d atoms", c, K, S.shape[1])
            K = S.shape[1]
        tau = min(config.sparsity, K)
        dictionaries.append(ksvd_train(S, K, tau, config.ksvd_iterations, init=config.init,
                                       seed=config.seed, class_id=c))
    stacked = StackedDictionary.stack(dictionaries)
    return SrcModel(stacked, class_list, [n for n, k in zip(names, keep) if k], loc, scale,
                    config.epsilon, dropped, config=config)


def class_residuals(stacked: StackedDictionary, class_list: Sequence[str], y: np.ndarray,
                    x: np.ndarray) -> np.ndarray:
    return np.array([np.linalg.norm(y - stacked.atoms @ stacked.class_projection(x, c))
                     for c in class_list])


def classify(model: SrcModel, feature_vector, *, strict: bool = False) -> ClassificationResult:
    """Sparse-code the normalized vector and pick the class with least residual.

    If the l1 solver fails to certify, the result is built from its last
    iterate and marked low-confidence; with ``strict=True`` a
    :class:`NonConvergenceError` carrying that result is raised instead.
    """
    v = np.asarray(feature_vector, dtype=np.float64)
    if v.shape != (len(model.feature_names),):
        raise InvalidInputError(
            f"expected {len(model.feature_names)} features, got {v.shape}", module="classifier")
    y = model.normalize(v)
    low = False
    try:
        code = bpdn_solve(model.stacked.atoms, y, model.epsilon, conv_tol=model.config.conv_tol)
    except NonConvergenceError as exc:
        code, low = exc.last, True
    res = class_residuals(model.stacked, model.class_list, y, code.coefficients)
    result = ClassificationResult(model.class_list[int(np.argmin(res))], res, code, low)
    if low and strict:
        raise NonConvergenceError("l1 solver did not converge", result, module="classifier")
    return result


def fit_model(windows: Sequence[SegmentWindow], config: PipelineConfig | None = None, *,
              table: FeatureTable | None = None, rows=None,
              stationary_threshold: float | None = None) -> SrcModel:
    """Threshold fitting, feature selection and dictionary training on windows."""
    config = (config or PipelineConfig()).validate()
    if table is None:
        fs = windows[0].sampling_rate_hz
        spec = FeatureSpec(config.window_seconds, fs, prominence_fraction=config.prominence_fraction,
                           band_mode=config.band_mode)
        table = FeatureTable(windows, spec)
    rows = np.arange(len(table.windows)) if rows is None else np.asarray(rows)
    train_windows = [table.windows[i] for i in rows]
    thresholds = fit_thresholds(train_windows)
    matrix = table.with_thresholds(thresholds, rows)
    labels = table.labels[rows]
    if len(set(labels)) < 2:
        raise InvalidInputError("training needs at least two classes", module="classifier")
    selection, columns = select_features(matrix, labels, table.names, config.n_selected,
                                         config.bin_count)
    idx = [table.names.index(c) for c in columns]
    by_class = {c: matrix[labels == c][:, idx] for c in order_classes(labels)}
    model = train(by_class, config, columns)
    model.feature_spec = replace(table.spec, thresholds=thresholds, selected=columns)
    model.selection = selection
    model.stationary_threshold = stationary_threshold
    return model


def window_features(model: SrcModel, window: SegmentWindow) -> np.ndarray:
    spec = model.feature_spec
    full = extract_all(window, spec).values
    return full[[spec.names.index(n) for n in model.feature_names]]


@dataclass(eq=False)
class TraceClassification:
    windows: list[ClassificationResult]
    majority: str
    votes: dict[str, int]


def majority_vote(labels: Sequence[str], class_list: Sequence[str]) -> str:
    counts = Counter(labels)
    return max(class_list, key=lambda c: (counts.get(c, 0), -class_list.index(c)))


def classify_trace(model: SrcModel, trace: VoltageTrace,
                   config: PipelineConfig | None = None) -> TraceClassification:
    config = config or model.config
    spec = model.feature_spec
    if spec is None or model.stationary_threshold is None:
        raise InvalidInputError("model lacks a feature pipeline", module="classifier")
    if abs(trace.sampling_rate_hz - spec.sampling_rate_hz) > 0.01 * spec.sampling_rate_hz:
        raise InvalidInputError(
            f"trace rate {trace.sampling_rate_hz} Hz does not match model rate "
            f"{spec.sampling_rate_hz} Hz", module="classifier")
    windows = preprocess(trace, config.span, model.stationary_threshold, spec.window_seconds,
                         config.overlap)
    if not windows:
        raise NoSignalError(f"trace {trace.trace_id!r} has no moving window to classify",
                            module="classifier")
    results = [classify(model, window_features(model, w)) for w in windows]
    preds = [r.predicted for r in results]
    votes = {c: preds.count(c) for c in model.class_list}
    return TraceClassification(results, majority_vote(preds, model.class_list), votes)
