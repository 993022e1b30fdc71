"""Labeled synthetic harvester traces for the five transportation modes.

Stands in for field recordings: each mode is a few vibration tones with
per-trace frequency jitter, broadband noise, Hann-shaped acceleration
transients and Poisson-scheduled stops.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, InvalidParameterError
from .signal import MODES, ManifestEntry, VoltageTrace, write_manifest, write_trace_csv

FORMAT_VERSION = 1
FREQ_JITTER = 0.05
EVENT_SECONDS = (2.0, 5.0)
STOP_NOISE_RATIO = 0.1


@dataclass(frozen=True)
class ModeProfile:
    base_freqs_hz: tuple[float, ...]
    base_amplitudes_v: tuple[float, ...]
    noise_sigma_v: float
    stop_rate_per_min: float = 0.0
    stop_duration_s: tuple[float, float] = (0.0, 0.0)
    event_rate_per_min: float = 0.0
    event_gain: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "base_freqs_hz", tuple(float(f) for f in self.base_freqs_hz))
        object.__setattr__(self, "base_amplitudes_v",
                           tuple(float(a) for a in self.base_amplitudes_v))
        object.__setattr__(self, "stop_duration_s", tuple(float(d) for d in self.stop_duration_s))

    def validate(self, sampling_rate_hz: float) -> None:
        if not 1 <= len(self.base_freqs_hz) <= 3 or len(self.base_freqs_hz) != len(
                self.base_amplitudes_v):
            raise InvalidParameterError("profile needs 1-3 tones with matching amplitudes",
                                        module="synthgen")
        values = (*self.base_freqs_hz, *self.base_amplitudes_v, self.noise_sigma_v,
                  self.stop_rate_per_min, *self.stop_duration_s, self.event_rate_per_min,
                  self.event_gain)
        if min(values) < 0:
            raise InvalidParameterError("profile values must be non-negative", module="synthgen")
        if self.stop_duration_s[0] > self.stop_duration_s[1]:
            raise InvalidParameterError("stop_duration_s must be (min, max)", module="synthgen")
        nyquist = sampling_rate_hz / 2
        if max(self.base_freqs_hz) * (1 + FREQ_JITTER) >= nyquist:
            raise InvalidParameterError("tone above Nyquist", module="synthgen")

    def scaled(self, c: float) -> "ModeProfile":
        return replace(self, base_amplitudes_v=tuple(c * a for a in self.base_amplitudes_v),
                       noise_sigma_v=c * self.noise_sigma_v)


@dataclass
class GeneratorConfig:
    profiles: dict[str, ModeProfile]
    sampling_rate_hz: float = 100.0
    trace_duration_s: float = 60.0
    traces_per_mode: int = 20
    users: int = 8
    user_gain_jitter: float = 0.07
    seed: int = 0

    def validate(self) -> "GeneratorConfig":
        if self.traces_per_mode < 1 or self.users < 1:
            raise InvalidParameterError("traces_per_mode and users must be >= 1", module="synthgen")
        if not (self.sampling_rate_hz > 0 and self.trace_duration_s > 0):
            raise InvalidParameterError("rate and duration must be positive", module="synthgen")
        if self.user_gain_jitter < 0:
            raise InvalidParameterError("user_gain_jitter must be non-negative", module="synthgen")
        for p in self.profiles.values():
            p.validate(self.sampling_rate_hz)
        return self

    def to_json(self) -> dict:
        d = asdict(self)
        d["profiles"] = {k: asdict(v) for k, v in self.profiles.items()}
        return d


def default_config(seed: int = 0, **overrides) -> GeneratorConfig:
    raw = json.loads(resources.files("kehmode").joinpath("data/profiles_v1.json").read_text())
    profiles = {m: ModeProfile(**raw["profiles"][m]) for m in MODES}
    cfg = GeneratorConfig(profiles, raw["sampling_rate_hz"], raw["trace_duration_s"],
                          raw["traces_per_mode"], raw["users"], raw["user_gain_jitter"], seed)
    return replace(cfg, **overrides).validate()


@dataclass
class GroundTruth:
    trace_id: str
    stop_intervals: list[tuple[int, int]] = field(default_factory=list)
    event_times_s: list[float] = field(default_factory=list)
    user_gain: float = 1.0

    def stop_mask(self, n: int) -> np.ndarray:
        mask = np.zeros(n, dtype=bool)
        for a, b in self.stop_intervals:
            mask[a:b] = True
        return mask


def _poisson_times(rng, rate_per_min: float, duration_s: float) -> np.ndarray:
    count = rng.poisson(rate_per_min * duration_s / 60.0)
    return np.sort(rng.uniform(0.0, duration_s, size=count))


def user_gain(config: GeneratorConfig, user_index: int) -> float:
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(1000, user_index)))
    return float(np.exp(config.user_gain_jitter * rng.standard_normal()))


def simulate_trace(profile: ModeProfile, config: GeneratorConfig, user_id: str, seed,
                   *, gain: float = 1.0, label: str | None = None,
                   trace_id: str | None = None) -> tuple[VoltageTrace, GroundTruth]:
    """One trace plus its ground truth.

    Every random draw is independent of the amplitude values, so scaling a
    profile's amplitudes and noise by c scales the output by c.
    """
    fs = config.sampling_rate_hz
    n = int(round(config.trace_duration_s * fs))
    duration = n / fs
    rng = np.random.default_rng(seed)
    t = np.arange(n) / fs

    ntones = len(profile.base_freqs_hz)
    jitter = 1 + rng.uniform(-FREQ_JITTER, FREQ_JITTER, size=ntones)
    phases = rng.uniform(0, 2 * np.pi, size=ntones)
    tones = np.zeros(n)
    for f, a, j, ph in zip(profile.base_freqs_hz, profile.base_amplitudes_v, jitter, phases):
        tones += a * np.sin(2 * np.pi * f * j * t + ph)

    envelope = np.ones(n)
    events = _poisson_times(rng, profile.event_rate_per_min, duration)
    lengths = rng.uniform(*EVENT_SECONDS, size=events.size)
    for start, length in zip(events, lengths):
        a = int(start * fs)
        width = max(int(round(length * fs)), 2)
        b = min(a + width, n)
        envelope[a:b] += (profile.event_gain - 1) * np.hanning(width)[: b - a]

    noise = rng.standard_normal(n)
    signal = tones * envelope + profile.noise_sigma_v * noise

    stops = []
    starts = _poisson_times(rng, profile.stop_rate_per_min, duration)
    lo, hi = profile.stop_duration_s
    durations = rng.uniform(lo, hi, size=starts.size)
    stop_noise = rng.standard_normal(n)
    for start, d in zip(starts, durations):
        a = int(start * fs)
        b = min(n, a + int(round(d * fs)))
        if b > a:
            stops.append((a, b))
    truth = GroundTruth(trace_id or "", [], [float(e) for e in events], gain)
    truth.stop_intervals = _merge(stops)
    mask = truth.stop_mask(n)
    signal[mask] = STOP_NOISE_RATIO * profile.noise_sigma_v * stop_noise[mask]
    trace = VoltageTrace(gain * signal, fs, label, user_id, trace_id)
    return trace, truth


def _merge(intervals):
    out: list[tuple[int, int]] = []
    for a, b in sorted(intervals):
        if out and a <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return out


def generate_trace(profile: ModeProfile, config: GeneratorConfig, user_id: str, seed,
                   **kw) -> VoltageTrace:
    return simulate_trace(profile, config, user_id, seed, **kw)[0]


def trace_seed(config: GeneratorConfig, mode: str, index: int) -> np.random.SeedSequence:
    """Per-trace stream keyed by (seed, mode, trace index); order-independent."""
    modes = list(config.profiles)
    return np.random.SeedSequence(config.seed, spawn_key=(modes.index(mode), index))


def generate_traces(config: GeneratorConfig) -> list[tuple[VoltageTrace, GroundTruth]]:
    config.validate()
    gains = [user_gain(config, u) for u in range(config.users)]
    out = []
    for mode, profile in config.profiles.items():
        for i in range(config.traces_per_mode):
            u = i % config.users
            tid = f"{mode}_{i:03d}"
            out.append(simulate_trace(profile, config, f"u{u}", trace_seed(config, mode, i),
                                      gain=gains[u], label=mode, trace_id=tid))
    return out


def generate_corpus(config: GeneratorConfig, out_dir: str | Path) -> Path:
    """Write trace CSVs, a manifest and a ground-truth sidecar; returns the manifest path."""
    out = Path(out_dir)
    try:
        (out / "traces").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InvalidInputError(f"cannot create {out}: {exc}", module="synthgen") from exc
    entries, truths = [], {}
    for trace, truth in generate_traces(config):
        rel = f"traces/{trace.trace_id}.csv"
        try:
            write_trace_csv(trace, out / rel)
        except OSError as exc:
            raise InvalidInputError(f"cannot write {out / rel}: {exc}", module="synthgen") from exc
        entries.append(ManifestEntry(rel, trace.label, trace.user_id, trace.trace_id,
                                     trace.sampling_rate_hz))
        truths[trace.trace_id] = {"stop_intervals": [list(iv) for iv in truth.stop_intervals],
                                  "event_times_s": truth.event_times_s,
                                  "user_gain": truth.user_gain,
                                  "n_samples": len(trace)}
    manifest = out / "manifest.json"
    write_manifest(entries, manifest)
    sidecar = {"format_version": FORMAT_VERSION, "generator": config.to_json(), "traces": truths}
    (out / "ground_truth.json").write_text(json.dumps(sidecar, indent=1) + "\n")
    return manifest
