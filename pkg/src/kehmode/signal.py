"""Trace I/O, smoothing, stop detection and windowing."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import kernels
from .errors import InvalidInputError, InvalidParameterError, TraceTooShortError

MODES = ("bus", "train", "car", "ferry", "light_rail")
CSV_HEADER = ("t_s", "voltage_v")
RATE_TOLERANCE = 0.01


@dataclass(frozen=True, eq=False)
class VoltageTrace:
    """Single-axis harvester voltage sampled at a fixed rate."""

    samples: np.ndarray
    sampling_rate_hz: float
    label: str | None = None
    user_id: str | None = None
    trace_id: str | None = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise InvalidInputError("trace samples must be one-dimensional", module="signal")
        if not (self.sampling_rate_hz > 0 and math.isfinite(self.sampling_rate_hz)):
            raise InvalidParameterError(
                f"sampling_rate_hz must be positive, got {self.sampling_rate_hz}", module="signal")
        if not np.all(np.isfinite(samples)):
            raise InvalidInputError("trace contains non-finite samples", module="signal")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.shape[0]

    def with_samples(self, samples: np.ndarray, **changes) -> "VoltageTrace":
        return replace(self, samples=samples, **changes)


@dataclass(frozen=True, eq=False)
class StationaryMask:
    flags: np.ndarray

    def __len__(self) -> int:
        return self.flags.shape[0]


@dataclass(frozen=True, eq=False)
class SegmentWindow:
    samples: np.ndarray
    sampling_rate_hz: float
    window_seconds: float
    label: str | None = None
    user_id: str | None = None
    trace_id: str | None = None
    start: int = 0


def moving_average(trace: VoltageTrace, span: int) -> VoltageTrace:
    """Centered moving average; the window shrinks symmetrically at both edges."""
    if span < 1 or span % 2 == 0:
        raise InvalidParameterError(f"span must be a positive odd integer, got {span}", module="signal")
    x = trace.samples
    n = x.shape[0]
    if n == 0:
        raise InvalidInputError("cannot smooth an empty trace", module="signal")
    half = span // 2
    out = np.empty(n)
    if n > 2 * half:
        out[half:n - half] = sliding_window_view(x, 2 * half + 1).mean(axis=1)
    for i in list(range(min(half, n))) + list(range(max(n - half, half), n)):
        h = min(half, i, n - 1 - i)
        out[i] = x[i - h:i + h + 1].mean()
    return trace.with_samples(out)


def history_length(sampling_rate_hz: float) -> int:
    """One second of samples, the look-back used by the stop detector."""
    return max(1, int(round(sampling_rate_hz)))


def rolling_sigma(trace: VoltageTrace) -> np.ndarray:
    """Std of the previous second for every sample that has a full second of history."""
    k = history_length(trace.sampling_rate_hz)
    return kernels.rolling_std(trace.samples, k)


def detect_stationary(trace: VoltageTrace, threshold: float) -> StationaryMask:
    """Flag samples whose previous-second std falls below ``threshold``.

    The first second has no complete history; it copies the first
    computable decision.
    """
    if not threshold > 0:
        raise InvalidParameterError(f"threshold must be positive, got {threshold}", module="signal")
    k = history_length(trace.sampling_rate_hz)
    n = len(trace)
    if n < k + 1:
        raise TraceTooShortError(
            f"stop detection needs at least {k + 1} samples, trace {trace.trace_id!r} has {n}",
            module="signal")
    sigma = kernels.rolling_std(trace.samples, k)
    flags = np.empty(n, dtype=bool)
    flags[k:] = sigma < threshold
    flags[:k] = flags[k]
    return StationaryMask(flags)


def excise_stationary(trace: VoltageTrace, mask: StationaryMask) -> VoltageTrace:
    if len(mask) != len(trace):
        raise InvalidInputError(
            f"mask length {len(mask)} does not match trace length {len(trace)}", module="signal")
    return trace.with_samples(trace.samples[~mask.flags])


def window_length(window_seconds: float, sampling_rate_hz: float) -> int:
    return int(round(window_seconds * sampling_rate_hz))


def hop_length(window_seconds: float, sampling_rate_hz: float, overlap_fraction: float) -> int:
    if not 0 <= overlap_fraction < 1:
        raise InvalidParameterError(
            f"overlap_fraction must be in [0, 1), got {overlap_fraction}", module="signal")
    hop = int(round((1 - overlap_fraction) * window_length(window_seconds, sampling_rate_hz)))
    if hop < 1:
        raise InvalidParameterError("overlap leaves a hop of zero samples", module="signal")
    return hop


def segment(trace: VoltageTrace, window_seconds: float,
            overlap_fraction: float = 0.1) -> list[SegmentWindow]:
    """Cut complete overlapping windows; a trailing partial window is dropped."""
    if not window_seconds > 0:
        raise InvalidParameterError(f"window_seconds must be positive, got {window_seconds}",
                                    module="signal")
    fs = trace.sampling_rate_hz
    size = window_length(window_seconds, fs)
    if size < 1:
        raise InvalidParameterError("window shorter than one sample", module="signal")
    hop = hop_length(window_seconds, fs, overlap_fraction)
    n = len(trace)
    return [
        SegmentWindow(trace.samples[s:s + size].copy(), fs, window_seconds,
                      trace.label, trace.user_id, trace.trace_id, s)
        for s in range(0, n - size + 1, hop)
    ]


def preprocess(trace: VoltageTrace, span: int, threshold: float,
               window_seconds: float, overlap_fraction: float = 0.1) -> list[SegmentWindow]:
    """Smooth, drop stationary samples and segment one trace."""
    smooth = moving_average(trace, span)
    mask = detect_stationary(smooth, threshold)
    moving = excise_stationary(smooth, mask)
    if len(moving) == 0:
        return []
    return segment(moving, window_seconds, overlap_fraction)


def otsu_threshold(values: np.ndarray, bins: int = 256) -> float:
    """Otsu split of a 1-D sample, maximizing between-class variance."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        return hi
    hist, edges = np.histogram(values, bins=bins, range=(lo, hi))
    centers = 0.5 * (edges[:-1] + edges[1:])
    w0 = np.cumsum(hist)
    w1 = w0[-1] - w0
    s0 = np.cumsum(hist * centers)
    m0 = s0 / np.maximum(w0, 1)
    m1 = (s0[-1] - s0) / np.maximum(w1, 1)
    between = w0 * w1 * (m0 - m1) ** 2
    between[w1 == 0] = -1
    return float(edges[int(np.argmax(between)) + 1])


def calibrate_threshold(traces: Iterable[VoltageTrace], span: int) -> float:
    """Stationary threshold from the pooled rolling std of smoothed traces.

    Stationary and moving periods form two well separated modes in log
    std, so the threshold is the Otsu split of log10(std).
    """
    pooled = []
    for trace in traces:
        sigma = rolling_sigma(moving_average(trace, span))
        pooled.append(sigma[sigma > 0])
    sig = np.concatenate(pooled) if pooled else np.empty(0)
    if sig.size == 0:
        raise InvalidInputError("no variation in calibration traces", module="signal")
    return float(10 ** otsu_threshold(np.log10(sig)))


# --- file formats -------------------------------------------------------

def write_trace_csv(trace: VoltageTrace, path: str | Path) -> None:
    t = np.arange(len(trace)) / trace.sampling_rate_hz
    with open(path, "w", newline="") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for ti, vi in zip(t, trace.samples):
            fh.write(f"{ti:.6f},{vi:.9g}\n")


def read_trace_csv(path: str | Path, sampling_rate_hz: float, *, label=None,
                   user_id=None, trace_id=None) -> VoltageTrace:
    """Read a ``t_s,voltage_v`` CSV and check its rate against the declared one."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
                raise InvalidInputError(f"{path}: header must be {','.join(CSV_HEADER)}",
                                        module="signal")
            data = np.array([[float(a), float(b)] for a, b in reader], dtype=np.float64)
    except OSError as exc:
        raise InvalidInputError(f"{path}: {exc}", module="signal") from exc
    except ValueError as exc:
        if isinstance(exc, InvalidInputError):
            raise
        raise InvalidInputError(f"{path}: malformed row ({exc})", module="signal") from exc
    if data.shape[0] < 2:
        raise InvalidInputError(f"{path}: need at least two samples", module="signal")
    t = data[:, 0]
    if np.any(np.diff(t) <= 0):
        raise InvalidInputError(f"{path}: time column is not strictly increasing", module="signal")
    inferred = (t.size - 1) / (t[-1] - t[0])
    if abs(inferred - sampling_rate_hz) > RATE_TOLERANCE * sampling_rate_hz:
        raise InvalidInputError(
            f"{path}: inferred rate {inferred:.3f} Hz differs from declared {sampling_rate_hz} Hz",
            module="signal")
    return VoltageTrace(data[:, 1], float(sampling_rate_hz), label, user_id, trace_id)


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    mode: str | None
    user_id: str
    trace_id: str
    sampling_rate_hz: float

    def to_json(self) -> dict:
        return {"path": self.path, "mode": self.mode, "user_id": self.user_id,
                "trace_id": self.trace_id, "sampling_rate_hz": self.sampling_rate_hz}


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"{path}: {exc}", module="signal") from exc
    if not isinstance(raw, list):
        raise InvalidInputError(f"{path}: manifest must be a JSON array", module="signal")
    entries = []
    for i, item in enumerate(raw):
        try:
            entries.append(ManifestEntry(str(item["path"]), item.get("mode"), str(item["user_id"]),
                                         str(item["trace_id"]), float(item["sampling_rate_hz"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"{path}: entry {i} invalid ({exc})", module="signal") from exc
        if entries[-1].mode is not None and entries[-1].mode not in MODES:
            raise InvalidInputError(f"{path}: entry {i} has unknown mode {entries[-1].mode!r}",
                                    module="signal")
    return entries


def write_manifest(entries: Sequence[ManifestEntry], path: str | Path) -> None:
    Path(path).write_text(json.dumps([e.to_json() for e in entries], indent=2) + "\n")


def load_corpus(manifest_path: str | Path) -> list[VoltageTrace]:
    """Load every trace listed in a manifest; paths resolve relative to it."""
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    traces = []
    for e in read_manifest(manifest_path):
        p = Path(e.path)
        traces.append(read_trace_csv(p if p.is_absolute() else root / p, e.sampling_rate_hz,
                                     label=e.mode, user_id=e.user_id, trace_id=e.trace_id))
    return traces
