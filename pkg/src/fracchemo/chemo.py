"""Chemotactic bias: sensitivity v = exp(beta c) and left/right jump probabilities."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit

__all__ = [
    "Sensitivity",
    "JumpProbabilities",
    "sensitivity_value",
    "jump_probabilities",
    "lattice_jump_probabilities",
    "self_chemoattractant",
]

_MAX_EXP_ARG = math.log(np.finfo(float).max)


@dataclass(frozen=True)
class Sensitivity:
    beta: float = 0.0

    def __post_init__(self):
        beta = float(self.beta)
        if not math.isfinite(beta) or beta < 0.0:
            raise ValueError(f"beta must be finite and >= 0, got {self.beta!r}")
        object.__setattr__(self, "beta", beta)


class JumpProbabilities(NamedTuple):
    p_left: float
    p_right: float


def _beta(s) -> float:
    return s.beta if isinstance(s, Sensitivity) else Sensitivity(s).beta


def sensitivity_value(s, c):
    """v = exp(beta c).  Raises OverflowError instead of returning inf."""
    beta = _beta(s)
    arg = beta * np.asarray(c, dtype=float)
    if not np.all(np.isfinite(arg)):
        raise ValueError("concentration must be finite")
    if np.any(arg > _MAX_EXP_ARG):
        raise OverflowError(f"exp(beta*c) overflows for beta*c = {np.max(arg):g}")
    out = np.exp(arg)
    return float(out) if out.ndim == 0 else out


def jump_probabilities(s, c_left, c_right) -> JumpProbabilities:
    """Probabilities of jumping towards the left and right neighbours.

    ``c_left`` and ``c_right`` are the chemoattractant concentrations at the
    two neighbouring sites.  Evaluated as a logistic in the concentration
    difference so large ``beta * c`` cannot overflow; ``p_right`` is formed
    as ``1 - p_left`` so the pair sums to one exactly.
    """
    beta = _beta(s)
    cl = np.asarray(c_left, dtype=float)
    cr = np.asarray(c_right, dtype=float)
    if not (np.all(np.isfinite(cl)) and np.all(np.isfinite(cr))):
        raise ValueError("concentrations must be finite")
    p_left = expit(beta * (cl - cr))
    p_right = 1.0 - p_left
    if p_left.ndim == 0:
        return JumpProbabilities(float(p_left), float(p_right))
    return JumpProbabilities(p_left, p_right)


def lattice_jump_probabilities(beta: float, c: np.ndarray) -> JumpProbabilities:
    """Per-site (p_left, p_right) on a periodic lattice.

    The jump from site i uses c[i-1] and c[i+1] (indices wrap).
    """
    c = np.asarray(c, dtype=float)
    return jump_probabilities(beta, np.roll(c, 1), np.roll(c, -1))


def self_chemoattractant(n) -> np.ndarray:
    """Proportion of the total population sitting at each site."""
    n = np.asarray(n, dtype=float)
    if np.any(n < 0.0):
        raise ValueError("field must be non-negative")
    total = n.sum()
    if not total > 0.0:
        raise ValueError("self-chemoattractant needs a positive total mass")
    return n / total
