"""Run configuration shared by the solver, Monte Carlo and CLI layers."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Any

from .densities import DensityKind, WaitingTimeLaw

__all__ = ["ConfigError", "SimulationConfig", "DEFAULT_OUTPUT_TIMES"]

DEFAULT_OUTPUT_TIMES = (0.4, 2.0, 4.0, 20.0)


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending setting."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class SimulationConfig:
    mode: str = "solve"
    model: int = 3
    gamma: float = 0.5
    tau: float = 0.1
    beta: float = 0.1
    reaction_k: float = 0.0
    dx: float = 1.0
    dt: float = 0.01
    t_max: float = 20.0
    grid_points: int = 101
    output_times: tuple[float, ...] = DEFAULT_OUTPUT_TIMES
    particles: int = 10_000
    runs: int = 200
    master_seed: int = 0
    workers: int = 1
    density: str = "pareto"
    out: str | None = None
    a: str | None = None
    b: str | None = None
    report: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def positive(key, value):
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigError(key, f"must be a positive number, got {value!r}")

        if self.mode not in ("solve", "mc", "compare"):
            raise ConfigError("mode", f"must be solve, mc or compare, got {self.mode!r}")
        if self.model not in (1, 2, 3, 4):
            raise ConfigError("model", f"must be 1, 2, 3 or 4, got {self.model!r}")
        if not (0.0 < self.gamma <= 1.0):
            raise ConfigError("gamma", f"must lie in (0, 1], got {self.gamma!r}")
        positive("tau", self.tau)
        if not (math.isfinite(self.beta) and self.beta >= 0.0):
            raise ConfigError("beta", f"must be finite and >= 0, got {self.beta!r}")
        if not math.isfinite(self.reaction_k):
            raise ConfigError("k", f"must be finite, got {self.reaction_k!r}")
        if self.reaction_k != 0.0 and self.model == 1 and self.mode == "solve":
            raise ConfigError("k", "Model I has no reaction extension")
        positive("dx", self.dx)
        positive("dt", self.dt)
        positive("tmax", self.t_max)
        if self.grid_points < 3 or self.grid_points % 2 == 0:
            raise ConfigError("grid_points", f"must be an odd integer >= 3, got {self.grid_points!r}")
        if not self.output_times:
            raise ConfigError("times", "at least one output time is required")
        if any(t < 0 or not math.isfinite(t) for t in self.output_times):
            raise ConfigError("times", "output times must be finite and >= 0")
        if list(self.output_times) != sorted(self.output_times):
            raise ConfigError("times", "output times must be sorted")
        if max(self.output_times) > self.t_max * (1 + 1e-12):
            raise ConfigError("times", f"latest output time exceeds tmax={self.t_max}")
        if self.mode == "solve":
            for t in (self.t_max, *self.output_times):
                steps = round(t / self.dt)
                if abs(steps * self.dt - t) > 1e-9 * max(1.0, t):
                    key = "tmax" if t == self.t_max else "times"
                    raise ConfigError(key, f"{t} is not a multiple of dt={self.dt}")
        if self.mode == "mc" and self.reaction_k != 0.0:
            raise ConfigError("k", "the Monte Carlo engine does not simulate reactions")
        if self.particles < 1:
            raise ConfigError("particles", "must be >= 1")
        if self.runs < 1:
            raise ConfigError("runs", "must be >= 1")
        if self.master_seed < 0:
            raise ConfigError("seed", "must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers", "must be >= 1")
        try:
            DensityKind(self.density)
        except ValueError:
            raise ConfigError("density", f"must be pareto or ml, got {self.density!r}") from None
        needs_pdf = self.mode == "mc" or (self.mode == "solve" and self.model == 4)
        if self.density == "ml" and self.gamma < 1.0 and needs_pdf:
            raise ConfigError("density", "the Mittag-Leffler density is only available for gamma = 1")

    @property
    def law(self) -> WaitingTimeLaw:
        return WaitingTimeLaw(DensityKind(self.density), self.tau, self.gamma)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["output_times"] = list(self.output_times)
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SimulationConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(key, "unknown configuration key")
        data = dict(data)
        if "output_times" in data:
            data["output_times"] = tuple(float(t) for t in data["output_times"])
        return cls(**data)

    def with_updates(self, **changes) -> "SimulationConfig":
        return replace(self, **changes)
