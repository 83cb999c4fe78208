"""Experiment configuration (JSON on disk).

Example::

    {
      "instance": {"kind": "rpr", "seed": 1, "args": {"n": 100, "p": 0.3}},
      "solver": "igd",
      "schedule": {"type": "geometric", "mu0_times_m": 2.0, "rho": 0.8},
      "order": {"kind": "cyclic", "seed": 0},
      "epochs": 500,
      "metrics": ["dist", "fval"],
      "x0_seed": 0
    }

Schedule types: ``constant`` (optional ``N``, defaults to epochs),
``geometric`` (``mu0_times_m``, ``rho``) and ``geometric-auto`` (``alpha`` a
number or ``"calibrated"``, optional ``lipschitz``, ``tau``, ``mu0_times_m``,
``rho``).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from incopt.instances import GENERATORS
from incopt.solvers import OrderKind, SolverKind

SCHEDULE_TYPES = ("constant", "geometric", "geometric-auto")
METRICS = ("dist", "fval", "moreau")


class ConfigError(ValueError):
    pass


def _positive(name, v):
    if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
        raise ConfigError(f"{name} must be a positive number, got {v!r}")


def _rho(name, v):
    if not (isinstance(v, (int, float)) and 0 < v < 1):
        raise ConfigError(f"{name} must lie in (0, 1), got {v!r}")


@dataclass
class GridSpec:
    rho: list = field(default_factory=lambda: [round(0.65 + i * (0.34 / 14), 12) for i in range(15)])
    mu0_times_m: list = field(default_factory=lambda: [round(1 + i * 15.0, 12) for i in range(15)])
    seeds: int = 5
    workers: int = 1


@dataclass
class ExperimentConfig:
    instance: dict = field(default_factory=lambda: {"kind": "rpr", "seed": 0, "args": {}})
    solver: str = "igd"
    schedule: dict = field(default_factory=lambda: {"type": "geometric", "mu0_times_m": 2.0, "rho": 0.8})
    order: dict = field(default_factory=lambda: {"kind": "cyclic", "seed": 0})
    epochs: int = 500
    metrics: list = field(default_factory=lambda: ["dist", "fval"])
    x0_seed: int = 0
    threshold: float = 1e-8
    window: int = 5
    tau_hat: Optional[float] = None
    grid: GridSpec = field(default_factory=GridSpec)
    outputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.grid, dict):
            self.grid = GridSpec(**self.grid)
        self.validate()

    def validate(self):
        inst = self.instance
        if not isinstance(inst, dict) or ("kind" not in inst and "path" not in inst):
            raise ConfigError("instance needs a 'kind' (generated) or a 'path' (saved file)")
        if "kind" in inst and inst["kind"] not in GENERATORS:
            raise ConfigError(f"unknown instance kind {inst['kind']!r}")
        if not isinstance(inst.get("args", {}), dict):
            raise ConfigError("instance.args must be a mapping")
        try:
            SolverKind(self.solver)
            OrderKind(self.order.get("kind", "cyclic"))
        except ValueError as err:
            raise ConfigError(str(err)) from None
        if not isinstance(self.epochs, int) or self.epochs < 1:
            raise ConfigError(f"epochs must be a positive integer, got {self.epochs!r}")
        if not isinstance(self.window, int) or not 1 <= self.window <= self.epochs:
            raise ConfigError("window must be an integer in [1, epochs]")
        _positive("threshold", self.threshold)
        if self.tau_hat is not None:
            _positive("tau_hat", self.tau_hat)
        bad = set(self.metrics) - set(METRICS)
        if bad:
            raise ConfigError(f"unknown metrics {sorted(bad)}")
        self._validate_schedule()
        if not self.grid.rho or not self.grid.mu0_times_m:
            raise ConfigError("grid axes must be nonempty")
        for r in self.grid.rho:
            _rho("grid.rho", r)
        for c in self.grid.mu0_times_m:
            _positive("grid.mu0_times_m", c)
        if self.grid.seeds < 1 or self.grid.workers < 1:
            raise ConfigError("grid.seeds and grid.workers must be >= 1")

    def _validate_schedule(self):
        s = self.schedule
        kind = s.get("type")
        if kind not in SCHEDULE_TYPES:
            raise ConfigError(f"schedule.type must be one of {SCHEDULE_TYPES}, got {kind!r}")
        if kind == "constant":
            N = s.get("N", self.epochs)
            if not isinstance(N, int) or N < 0:
                raise ConfigError("schedule.N must be a nonnegative integer")
        elif kind == "geometric":
            _positive("schedule.mu0_times_m", s.get("mu0_times_m"))
            _rho("schedule.rho", s.get("rho"))
        else:
            alpha = s.get("alpha", "calibrated")
            if alpha != "calibrated":
                _positive("schedule.alpha", alpha)
            for key in ("lipschitz", "tau", "mu0_times_m"):
                if s.get(key) is not None:
                    _positive(f"schedule.{key}", s[key])
            if s.get("rho") is not None:
                _rho("schedule.rho", s["rho"])

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        return cls(**d)

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save(self, path):
        Path(path).write_text(self.dumps() + "\n")

    @classmethod
    def load(cls, path):
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: malformed JSON ({err})") from None
        return cls.from_dict(d)
