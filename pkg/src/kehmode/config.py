"""Pipeline parameters shared by training, classification and evaluation."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

from .errors import InvalidParameterError


@dataclass
class PipelineConfig:
    span: int = 11
    stationary_threshold: float | None = None  # None = calibrate from the corpus
    window_seconds: float = 5.0
    overlap: float = 0.1
    prominence_fraction: float = 0.05
    band_mode: str = "per_bin"
    bin_count: int = 10
    n_selected: int = 20
    atoms_per_class: int = 50
    sparsity: int = 5
    ksvd_iterations: int = 30
    init: str = "first"
    dictionary_mode: str = "ksvd"
    normalization: str = "scale"  # scale | zscore | none
    epsilon: float = 0.001
    conv_tol: float = 1e-7
    seed: int = 0

    def validate(self) -> "PipelineConfig":
        def bad(msg):
            raise InvalidParameterError(msg, module="config")

        if self.span < 1 or self.span % 2 == 0:
            bad(f"span must be a positive odd integer, got {self.span}")
        if self.stationary_threshold is not None and not self.stationary_threshold > 0:
            bad("stationary_threshold must be positive or 'auto'")
        if not (self.window_seconds > 0 and math.isfinite(self.window_seconds)):
            bad("window_seconds must be positive")
        if not 0 <= self.overlap < 1:
            bad("overlap must be in [0, 1)")
        if self.prominence_fraction < 0:
            bad("prominence_fraction must be non-negative")
        if self.band_mode not in ("per_bin", "summed"):
            bad("band_mode must be 'per_bin' or 'summed'")
        if self.bin_count < 2:
            bad("bin_count must be >= 2")
        if self.n_selected < 1:
            bad("n_selected must be >= 1")
        if self.atoms_per_class < 1 or not 1 <= self.sparsity <= self.atoms_per_class:
            bad("need 1 <= sparsity <= atoms_per_class")
        if self.ksvd_iterations < 0:
            bad("ksvd_iterations must be >= 0")
        if self.init not in ("first", "random"):
            bad("init must be 'first' or 'random'")
        if self.dictionary_mode not in ("ksvd", "raw"):
            bad("dictionary_mode must be 'ksvd' or 'raw'")
        if self.normalization not in ("scale", "zscore", "none"):
            bad("normalization must be 'scale', 'zscore' or 'none'")
        if not self.epsilon > 0:
            bad("epsilon must be positive")
        return self

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidParameterError(f"unknown config keys: {sorted(unknown)}", module="config")
        return cls(**d)
