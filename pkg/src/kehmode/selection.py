"""Relative mutual information scoring and mRMR feature selection."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, InvalidParameterError, UndefinedEntropyError
from .features import BAND_NAMES


@dataclass(frozen=True, eq=False)
class DiscretizedFeature:
    bin_ids: np.ndarray
    bin_edges: np.ndarray

    @property
    def bin_count(self) -> int:
        return int(self.bin_ids.max()) + 1 if self.bin_ids.size else 0


@dataclass
class SelectionResult:
    names: list[str]
    rmi_scores: list[float]
    ranked_features: list[str]
    selected: list[bool]

    @property
    def selected_names(self) -> list[str]:
        return [n for n, s in zip(self.names, self.selected) if s]

    def to_json(self) -> dict:
        return {"names": self.names, "rmi_scores": self.rmi_scores,
                "ranked_features": self.ranked_features, "selected": self.selected}

    @classmethod
    def from_json(cls, d: dict) -> "SelectionResult":
        return cls(list(d["names"]), [float(v) for v in d["rmi_scores"]],
                   list(d["ranked_features"]), [bool(v) for v in d["selected"]])


def discretize(values, bin_count: int = 10) -> DiscretizedFeature:
    """Equal-frequency binning.

    Interior edges sit at the empirical quantiles; coincident edges merge,
    and a value's bin is the number of edges strictly below it.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise InvalidInputError("cannot discretize an empty sequence", module="selection")
    if bin_count < 2:
        raise InvalidParameterError(f"bin_count must be >= 2, got {bin_count}", module="selection")
    probs = np.arange(1, bin_count) / bin_count
    inner = np.unique(np.quantile(values, probs))
    raw = np.searchsorted(inner, values, side="left")
    used, ids = np.unique(raw, return_inverse=True)
    edges = np.unique(np.concatenate([[values.min()], inner, [values.max()]]))
    return DiscretizedFeature(ids.astype(np.int64), edges)


def _codes(x) -> np.ndarray:
    if isinstance(x, DiscretizedFeature):
        return x.bin_ids
    return np.unique(np.asarray(x), return_inverse=True)[1]


def entropy(x) -> float:
    """Shannon entropy in bits of a discrete sequence."""
    counts = np.bincount(_codes(x))
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log2(p)).sum())


def _joint_counts(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na, nb = a.max() + 1, b.max() + 1
    return np.bincount(a * nb + b, minlength=na * nb).reshape(na, nb)


def conditional_entropy(c, f) -> float:
    """H(C | F) in bits."""
    ca, fa = _codes(c), _codes(f)
    if ca.shape != fa.shape:
        raise InvalidInputError("sequences differ in length", module="selection")
    joint = _joint_counts(ca, fa).astype(np.float64)
    n = joint.sum()
    pf = joint.sum(axis=0)
    nz = joint > 0
    ratio = joint[nz] / np.broadcast_to(pf, joint.shape)[nz]
    return float(-(joint[nz] / n * np.log2(ratio)).sum())


def mutual_information(a, b) -> float:
    """Empirical mutual information in bits."""
    ca, cb = _codes(a), _codes(b)
    if ca.shape != cb.shape:
        raise InvalidInputError("sequences differ in length", module="selection")
    joint = _joint_counts(ca, cb).astype(np.float64)
    n = joint.sum()
    pa = joint.sum(axis=1, keepdims=True) / n
    pb = joint.sum(axis=0, keepdims=True) / n
    pj = joint / n
    nz = pj > 0
    mi = float((pj[nz] * np.log2(pj[nz] / (pa @ pb)[nz])).sum())
    return max(mi, 0.0)


def rmi(class_labels, feature) -> float:
    """Fraction of class entropy removed by knowing the feature."""
    hc = entropy(class_labels)
    if hc <= 0:
        raise UndefinedEntropyError("class labels have a single value; H(C) = 0",
                                    module="selection")
    value = (hc - conditional_entropy(class_labels, feature)) / hc
    return min(max(value, 0.0), 1.0)


def mrmr_rank(features: Sequence, class_labels, redundancy_weight: float = 1.0) -> list[int]:
    """Greedy difference-form mRMR over all features; ties go to the lower index.

    Features carrying no information about the class are ranked last, in
    index order, since the difference score would otherwise favour them
    over relevant but redundant features.
    """
    count = len(features)
    relevance = np.array([mutual_information(f, class_labels) for f in features])
    remaining = [i for i in range(count) if relevance[i] > 0]
    idle = [i for i in range(count) if not relevance[i] > 0]
    order: list[int] = []
    redundancy = np.zeros(count)
    while remaining:
        if order:
            scores = relevance[remaining] - redundancy_weight * redundancy[remaining] / len(order)
        else:
            scores = relevance[remaining]
        pick = remaining[int(np.argmax(scores))]
        order.append(pick)
        remaining.remove(pick)
        for j in remaining:
            redundancy[j] += mutual_information(features[j], features[pick])
    return order + idle


def mrmr_select(features: Sequence, class_labels, m: int, names: Sequence[str] | None = None,
                redundancy_weight: float = 1.0) -> SelectionResult:
    count = len(features)
    if not 1 <= m <= count:
        raise InvalidParameterError(f"m must be in [1, {count}], got {m}", module="selection")
    names = list(names) if names is not None else [f"f{i}" for i in range(count)]
    order = mrmr_rank(features, class_labels, redundancy_weight)
    chosen = set(order[:m])
    scores = [rmi(class_labels, f) for f in features]
    return SelectionResult(names, scores, [names[i] for i in order],
                           [i in chosen for i in range(count)])


# --- ranked units over the candidate vector -----------------------------

BAND_UNIT = "fft_bands"


def feature_units(names: Sequence[str]) -> list[tuple[str, list[int]]]:
    """Group the per-bin FFT band columns into one ranked unit; others stand alone."""
    units: list[tuple[str, list[int]]] = []
    band_cols = [i for i, n in enumerate(names) if n in BAND_NAMES]
    for i, n in enumerate(names):
        if n in BAND_NAMES:
            if i == band_cols[0]:
                units.append((BAND_UNIT, band_cols))
        else:
            units.append((n, [i]))
    return units


def select_features(matrix: np.ndarray, labels, names: Sequence[str], m: int,
                    bin_count: int = 10) -> tuple[SelectionResult, list[str]]:
    """Rank units by mRMR on training rows and expand the chosen units to columns.

    A multi-column unit is scored through the sum of its columns.
    """
    units = feature_units(names)
    disc = [discretize(matrix[:, cols].sum(axis=1), bin_count) for _, cols in units]
    result = mrmr_select(disc, labels, min(m, len(units)), [u for u, _ in units])
    chosen = {u for u, s in zip(result.names, result.selected) if s}
    columns = [names[c] for u, cols in units if u in chosen for c in cols]
    return result, columns
