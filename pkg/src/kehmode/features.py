"""Candidate feature set computed per window.

Feature order is fixed by :func:`feature_names`; the vibration features
work on peaks found by :func:`detect_peaks`.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .errors import InvalidInputError, InvalidParameterError
from .signal import SegmentWindow

STATISTICAL = ("min", "max", "std", "mean_abs", "count_gt_t1", "count_gt_t2", "count_gt_t3",
               "q1", "q3", "iqr", "abs_area")
TIME_DOMAIN = ("length", "mean", "median", "rms", "range", "mean_abs_dev", "mean_crossings",
               "coef_variation", "skewness", "kurtosis")
SPECTRAL = ("dom_freq_1", "dom_freq_2", "dom_freq_ratio", "spectral_energy", "spectral_entropy",
            "spectrum_peak_pos", "power_mean", "power_min", "power_max")
VIBRATION = ("peak_mean", "peak_dist_mean", "peak_dist_max", "peak_max", "peak_to_peak")
BAND_COUNT = 50
BAND_NAMES = tuple(f"band_{b:02d}hz" for b in range(1, BAND_COUNT + 1))
BAND_SUM = "fft_band_sum"
COUNT_NAMES = ("count_gt_t1", "count_gt_t2", "count_gt_t3")
THRESHOLD_PERCENTILES = (50.0, 75.0, 90.0)


def feature_names(band_mode: str = "per_bin") -> tuple[str, ...]:
    if band_mode == "per_bin":
        bands = BAND_NAMES
    elif band_mode == "summed":
        bands = (BAND_SUM,)
    else:
        raise InvalidParameterError(f"unknown band_mode {band_mode!r}", module="features")
    return STATISTICAL + TIME_DOMAIN + SPECTRAL + bands + VIBRATION


@dataclass
class FeatureSpec:
    """Recipe for the candidate vector plus the selected subset."""

    window_seconds: float
    sampling_rate_hz: float
    thresholds: tuple[float, float, float] = (0.0, 0.0, 0.0)
    prominence_fraction: float = 0.05
    band_mode: str = "per_bin"
    selected: list[str] | None = None
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.thresholds = tuple(float(t) for t in self.thresholds)
        if not self.names:
            self.names = list(feature_names(self.band_mode))

    @property
    def spec_id(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha1(blob).hexdigest()[:12]

    def to_json(self) -> dict:
        d = asdict(self)
        d["thresholds"] = list(self.thresholds)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "FeatureSpec":
        return cls(**d)


@dataclass(frozen=True, eq=False)
class PeakSet:
    indices: np.ndarray
    amplitudes: np.ndarray

    def __len__(self) -> int:
        return self.indices.shape[0]


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    spec_id: str
    label: str | None = None
    user_id: str | None = None
    trace_id: str | None = None


def detect_peaks(window: SegmentWindow, min_prominence: float) -> PeakSet:
    """Strict interior local maxima with prominence at least ``min_prominence``."""
    x = window.samples
    if x.shape[0] == 0:
        raise InvalidInputError("cannot detect peaks in an empty window", module="features")
    idx, prom = kernels.peak_prominences(x)
    keep = idx[prom >= min_prominence]
    return PeakSet(keep, x[keep])


def vibration_features(peaks: PeakSet, window: SegmentWindow) -> np.ndarray:
    """[mean of peaks, mean gap (s), max gap (s), max of peaks, peak-to-peak]."""
    if len(peaks) == 0:
        return np.zeros(5)
    amp = peaks.amplitudes
    if len(peaks) == 1:
        return np.array([amp[0], 0.0, 0.0, amp[0], 0.0])
    gaps = np.diff(peaks.indices) / window.sampling_rate_hz
    return np.array([amp.mean(), gaps.mean(), gaps.max(), amp.max(), amp.max() - amp.min()])


def statistical_features(window: SegmentWindow, thresholds: Sequence[float]) -> np.ndarray:
    """Order follows ``STATISTICAL``. Threshold counts are strictly-greater."""
    x = window.samples
    if x.shape[0] == 0:
        raise InvalidInputError("empty window", module="features")
    q1, q3 = np.percentile(x, [25.0, 75.0])
    t1, t2, t3 = thresholds
    return np.array([
        x.min(), x.max(), x.std(), np.abs(x).mean(),
        np.count_nonzero(x > t1), np.count_nonzero(x > t2), np.count_nonzero(x > t3),
        q1, q3, q3 - q1, np.abs(x).sum() / window.sampling_rate_hz,
    ], dtype=np.float64)


def time_domain_features(window: SegmentWindow) -> np.ndarray:
    x = window.samples
    n = x.shape[0]
    mean = x.mean()
    dev = x - mean
    m2 = np.mean(dev ** 2)
    std = np.sqrt(m2)
    signs = np.sign(dev)
    signs = signs[signs != 0]
    crossings = np.count_nonzero(signs[1:] != signs[:-1])
    cv = std / abs(mean) if abs(mean) > 1e-12 else 0.0
    if m2 > 0:
        skew = np.mean(dev ** 3) / m2 ** 1.5
        kurt = np.mean(dev ** 4) / m2 ** 2
    else:
        skew = kurt = 0.0
    return np.array([
        n, mean, np.median(x), np.sqrt(np.mean(x ** 2)), x.max() - x.min(),
        np.abs(dev).mean(), crossings, cv, skew, kurt,
    ], dtype=np.float64)


def magnitude_spectrum(x: np.ndarray, sampling_rate_hz: float) -> tuple[np.ndarray, np.ndarray]:
    """One-sided orthonormal DFT magnitudes of the mean-removed signal, bins 1..n//2."""
    n = x.shape[0]
    mag = np.abs(np.fft.rfft(x - x.mean(), norm="ortho"))[1:n // 2 + 1]
    freqs = np.arange(1, n // 2 + 1) * sampling_rate_hz / n
    return freqs, mag


def spectral_energy(mag: np.ndarray, n: int) -> float:
    """Sum of squared one-sided magnitudes, Nyquist bin weighted 1/2.

    With the orthonormal DFT this equals n/2 times the population variance.
    """
    p = mag ** 2
    if n % 2 == 0 and p.size:
        return float(p[:-1].sum() + 0.5 * p[-1])
    return float(p.sum())


def band_magnitudes(freqs: np.ndarray, mag: np.ndarray) -> np.ndarray:
    """Magnitudes summed over 1 Hz bands centred on 1..50 Hz."""
    bands = np.rint(freqs).astype(np.int64)
    ok = (bands >= 1) & (bands <= BAND_COUNT)
    return np.bincount(bands[ok] - 1, weights=mag[ok], minlength=BAND_COUNT)[:BAND_COUNT]


def frequency_features(window: SegmentWindow, band_mode: str = "per_bin") -> np.ndarray:
    """Order follows ``SPECTRAL`` then the band block."""
    x = window.samples
    n = x.shape[0]
    if n < 8:
        raise InvalidInputError(f"frequency features need >= 8 samples, got {n}", module="features")
    freqs, mag = magnitude_spectrum(x, window.sampling_rate_hz)
    power = mag ** 2
    total = power.sum()
    bands = band_magnitudes(freqs, mag)
    band_block = bands if band_mode == "per_bin" else np.array([bands.sum()])
    if total <= 0:
        head = np.zeros(6)
    else:
        order = np.argsort(-mag, kind="stable")
        first, second = order[0], order[1] if order.size > 1 else order[0]
        p = power / total
        nz = p[p > 0]
        entropy = float(-(nz * np.log(nz)).sum() / np.log(p.size)) if p.size > 1 else 0.0
        head = np.array([freqs[first], freqs[second], mag[second] / mag[first],
                         spectral_energy(mag, n), min(max(entropy, 0.0), 1.0), first + 1.0])
    return np.concatenate([head, [power.mean(), power.min(), power.max()], band_block])


def default_prominence(window: SegmentWindow, fraction: float) -> float:
    x = window.samples
    return fraction * float(x.max() - x.min())


def extract_all(window: SegmentWindow, spec: FeatureSpec) -> FeatureVector:
    peaks = detect_peaks(window, default_prominence(window, spec.prominence_fraction))
    values = np.concatenate([
        statistical_features(window, spec.thresholds),
        time_domain_features(window),
        frequency_features(window, spec.band_mode),
        vibration_features(peaks, window),
    ])
    return FeatureVector(values, spec.spec_id, window.label, window.user_id, window.trace_id)


def fit_thresholds(windows: Sequence[SegmentWindow]) -> tuple[float, float, float]:
    """50th/75th/90th percentiles of |v| pooled over the given windows."""
    pooled = np.abs(np.concatenate([w.samples for w in windows]))
    return tuple(float(v) for v in np.percentile(pooled, THRESHOLD_PERCENTILES))


def threshold_counts(samples: np.ndarray, thresholds: Sequence[float]) -> np.ndarray:
    """Counts above each threshold for a (windows x samples) array."""
    return np.stack([np.count_nonzero(samples > t, axis=1) for t in thresholds], axis=1).astype(
        np.float64)


class FeatureTable:
    """Candidate features for a set of equal-length windows.

    Threshold counts depend on training-split statistics, so they are
    recomputed cheaply by :meth:`with_thresholds` instead of re-extracting
    everything.
    """

    def __init__(self, windows: Sequence[SegmentWindow], spec: FeatureSpec):
        self.windows = list(windows)
        self.spec = spec
        self.names = list(spec.names)
        if self.windows:
            self.values = np.vstack([extract_all(w, spec).values for w in self.windows])
            self.samples = np.vstack([w.samples for w in self.windows])
        else:
            self.values = np.empty((0, len(self.names)))
            self.samples = np.empty((0, 0))
        self.count_columns = [self.names.index(c) for c in COUNT_NAMES]

    def with_thresholds(self, thresholds: Sequence[float], rows=None) -> np.ndarray:
        rows = np.arange(len(self.windows)) if rows is None else np.asarray(rows)
        out = self.values[rows].copy()
        out[:, self.count_columns] = threshold_counts(self.samples[rows], thresholds)
        return out

    @property
    def labels(self) -> np.ndarray:
        return np.array([w.label for w in self.windows], dtype=object)


def write_feature_csv(path, names: Sequence[str], values: np.ndarray,
                      windows: Sequence[SegmentWindow]) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(names) + ["label", "user_id", "trace_id"])
        for row, w in zip(values, windows):
            writer.writerow([repr(float(v)) for v in row] + [w.label, w.user_id, w.trace_id])
