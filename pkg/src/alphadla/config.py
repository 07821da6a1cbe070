"""Experiment configuration.

A config file is a flat JSON object whose keys are the fields of
:class:`ExperimentConfig`; unknown keys are rejected.  Run ``i`` of an
ensemble uses seed ``seed + i``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields


@dataclass
class ExperimentConfig:
    alphas: list = field(default_factory=lambda: [0.25])
    n_max: int = 512
    runs: int = 20
    seed: int = 0
    x_cache: int = 2**16
    out_dir: str = "results"
    threads: int = 1
    # scaling
    fit_min: int = 2
    # cantor
    levels: int = 8
    # harmonic
    harmonic_set: list = field(default_factory=lambda: [-3, 0, 7])
    harmonic_starts: list = field(default_factory=lambda: [10**3, 10**4, 10**5])
    harmonic_hits: int = 1500
    harmonic_max_walks: int = 2_000_000
    eps_esc: float = 1e-4
    # coupling
    coupling_n: list = field(default_factory=lambda: [256])
    q_max: int | None = None
    D: str | int = "auto"
    quantile_p: float = 5 / 6
    m_runs: int = 50
    eps_path: float = 1e-4
    force: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.alphas or not all(0.0 < float(a) < 1.0 for a in self.alphas):
            raise ValueError("alphas must be a nonempty list of values in (0, 1)")
        self.alphas = [float(a) for a in self.alphas]
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.n_max < 2:
            raise ValueError("n_max must be at least 2")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        if not 0.0 < self.quantile_p < 1.0:
            raise ValueError("quantile_p must lie in (0, 1)")
        if isinstance(self.D, str) and self.D != "auto":
            self.D = int(self.D)
        if self.levels > 12:
            raise ValueError("levels must be at most 12")

    def run_seeds(self, runs: int | None = None) -> list:
        """Distinct per-run seeds: ``seed + i``."""
        return [self.seed + i for i in range(self.runs if runs is None else runs)]

    def q_range(self, n: int) -> int:
        return self.q_max if self.q_max is not None else math.ceil(math.log(n))

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            d = json.load(fh)
        if not isinstance(d, dict):
            raise ValueError("config file must hold a JSON object")
        return cls.from_dict(d)
