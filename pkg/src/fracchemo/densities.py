"""Heavy-tailed waiting-time laws for the CTRW models.

Two laws are supported:

* ``pareto``: psi(t) = (gamma/tau) (1 + t/tau)^-(1+gamma), with closed-form
  survival and inverse CDF.
* ``ml``: the Mittag-Leffler law.  Only its gamma = 1 member (the exponential
  density) can be evaluated or sampled; for gamma < 1 the law still carries
  the tail constant so that Models II and III can be run with it.

A Pareto law requested with gamma = 1 is redirected to the exponential law.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "DensityKind",
    "WaitingTimeLaw",
    "pdf",
    "survival",
    "sample",
    "tail_constant",
]

logger = logging.getLogger(__name__)


class DensityKind(str, enum.Enum):
    PARETO = "pareto"
    MITTAG_LEFFLER = "ml"


@dataclass(frozen=True)
class WaitingTimeLaw:
    """Waiting-time density with characteristic time ``tau`` and exponent ``gamma``."""

    kind: DensityKind
    tau: float
    gamma: float

    def __post_init__(self):
        kind = DensityKind(self.kind)
        tau = float(self.tau)
        gamma = float(self.gamma)
        if not (math.isfinite(tau) and tau > 0.0):
            raise ValueError(f"tau must be a positive finite number, got {self.tau!r}")
        if not (0.0 < gamma <= 1.0):
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma!r}")
        if kind is DensityKind.PARETO and gamma == 1.0:
            logger.warning("gamma = 1: using the exponential waiting-time law instead of Pareto")
            kind = DensityKind.MITTAG_LEFFLER
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def pareto(cls, tau: float, gamma: float) -> "WaitingTimeLaw":
        return cls(DensityKind.PARETO, tau, gamma)

    @classmethod
    def exponential(cls, tau: float) -> "WaitingTimeLaw":
        return cls(DensityKind.MITTAG_LEFFLER, tau, 1.0)

    @property
    def is_exponential(self) -> bool:
        return self.kind is DensityKind.MITTAG_LEFFLER and self.gamma == 1.0

    @cached_property
    def a_gamma(self) -> float:
        if self.kind is DensityKind.MITTAG_LEFFLER:
            return 1.0
        return 1.0 / math.gamma(1.0 - self.gamma)

    def pdf(self, t):
        return pdf(self, t)

    def survival(self, t):
        return survival(self, t)

    def sample(self, r):
        return sample(self, r)


def _check_evaluable(law: WaitingTimeLaw) -> None:
    if law.kind is DensityKind.MITTAG_LEFFLER and law.gamma < 1.0:
        raise NotImplementedError(
            "the Mittag-Leffler density is only available for gamma = 1 (exponential)"
        )


def _times(t):
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0.0) or np.any(np.isnan(arr)):
        raise ValueError("waiting times must be non-negative")
    return arr


def _unwrap(arr):
    return float(arr) if arr.ndim == 0 else arr


def pdf(law: WaitingTimeLaw, t):
    """Density psi(t); accepts scalars or arrays."""
    _check_evaluable(law)
    t = _times(t)
    if law.is_exponential:
        out = np.exp(-t / law.tau) / law.tau
    else:
        out = (law.gamma / law.tau) * (1.0 + t / law.tau) ** (-1.0 - law.gamma)
    return _unwrap(out)


def survival(law: WaitingTimeLaw, t):
    """Probability Phi(t) that no jump has occurred by time ``t``."""
    _check_evaluable(law)
    t = _times(t)
    if law.is_exponential:
        out = np.exp(-t / law.tau)
    else:
        out = (1.0 + t / law.tau) ** (-law.gamma)
    return _unwrap(out)


def sample(law: WaitingTimeLaw, r):
    """Inverse-CDF transform of uniform draws ``r`` in (0, 1) to waiting times."""
    _check_evaluable(law)
    r = np.asarray(r, dtype=float)
    if np.any(~((r > 0.0) & (r < 1.0))):
        raise ValueError("uniform draws must lie in the open interval (0, 1)")
    if law.is_exponential:
        out = -law.tau * np.log1p(-r)
    else:
        # (1-r)^(-1/gamma) - 1 written with expm1 to keep small draws accurate
        out = law.tau * np.expm1(-np.log1p(-r) / law.gamma)
    return _unwrap(out)


def tail_constant(law: WaitingTimeLaw) -> float:
    """A_gamma: 1 for the Mittag-Leffler family, 1/Gamma(1-gamma) for Pareto."""
    return law.a_gamma
