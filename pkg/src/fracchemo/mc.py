"""Event-driven Monte Carlo simulation of chemotactic CTRWs on a periodic lattice.

Each run follows the classic next-event loop: every particle carries the
absolute time of its next jump, a binary min-heap yields the earliest one,
snapshots are taken whenever that time passes the next output time, and
the jumping particle picks its direction from the chemoattractant proportion
at its two neighbours *at the jump instant*.  The occupancy histogram doubles
as the self-chemoattractant estimate and is updated in O(1) per jump.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .chemo import JumpProbabilities
from .config import SimulationConfig

__all__ = [
    "EnsembleResult",
    "sample_jump",
    "run_single",
    "run_ensemble",
    "run_seeds",
    "mean_square_displacement",
    "mean_displacement",
    "fit_msd_exponent",
]


def sample_jump(p: JumpProbabilities, r: float, dx: float = 1.0) -> float:
    """Nearest-neighbour displacement: -dx when r < p_left, +dx otherwise."""
    p_left = p.p_left if isinstance(p, JumpProbabilities) else float(p)
    return -dx if r < p_left else dx


@njit(cache=True)
def _sift_down(keys, ids, pos, n):
    key = keys[pos]
    ident = ids[pos]
    while True:
        child = 2 * pos + 1
        if child >= n:
            break
        if child + 1 < n and keys[child + 1] < keys[child]:
            child += 1
        if keys[child] >= key:
            break
        keys[pos] = keys[child]
        ids[pos] = ids[child]
        pos = child
    keys[pos] = key
    ids[pos] = ident


@njit(cache=True)
def _waiting_time(rng, tau, gamma, exponential):
    r = rng.random()
    while r == 0.0:
        r = rng.random()
    if exponential:
        return -tau * math.log1p(-r)
    return tau * math.expm1(-math.log1p(-r) / gamma)


@njit(cache=True, nogil=True)
def _event_loop(rng, sites, n_sites, tau, gamma, exponential, beta, external_c, use_external, out_times):
    n_particles = sites.shape[0]
    counts = np.zeros(n_sites, dtype=np.int64)
    for i in range(n_particles):
        counts[sites[i]] += 1
    inv_total = 1.0 / n_particles

    keys = np.empty(n_particles)
    ids = np.empty(n_particles, dtype=np.int64)
    for i in range(n_particles):
        keys[i] = _waiting_time(rng, tau, gamma, exponential)
        ids[i] = i
    for pos in range(n_particles // 2 - 1, -1, -1):
        _sift_down(keys, ids, pos, n_particles)

    n_out = out_times.shape[0]
    out = np.zeros((n_out, n_sites), dtype=np.int64)
    k = 0
    n_events = 0
    while k < n_out:
        t_jump = keys[0]
        while k < n_out and t_jump > out_times[k]:
            out[k, :] = counts
            k += 1
        if k == n_out:
            break
        who = ids[0]
        s = sites[who]
        left = s - 1 if s > 0 else n_sites - 1
        right = s + 1 if s < n_sites - 1 else 0
        if use_external:
            c_left = external_c[left]
            c_right = external_c[right]
        else:
            c_left = counts[left] * inv_total
            c_right = counts[right] * inv_total
        p_left = 1.0 / (1.0 + math.exp(beta * (c_right - c_left)))
        # direction first, then the new waiting time
        target = left if rng.random() < p_left else right
        counts[s] -= 1
        counts[target] += 1
        sites[who] = target
        keys[0] = t_jump + _waiting_time(rng, tau, gamma, exponential)
        _sift_down(keys, ids, 0, n_particles)
        n_events += 1
    return out, n_events


@dataclass
class EnsembleResult:
    output_times: np.ndarray
    histograms: np.ndarray  # mean particle count per site, shape (times, sites)
    runs: int
    particles: int
    dx: float = 1.0
    events: int = 0
    master_seed: int | None = None

    @property
    def x(self) -> np.ndarray:
        n = self.histograms.shape[1]
        return (np.arange(n) - n // 2) * self.dx

    def profiles(self) -> np.ndarray:
        """Histograms normalised to unit mass."""
        return self.histograms / self.particles

    def profile(self, t: float) -> np.ndarray:
        idx = np.flatnonzero(np.isclose(self.output_times, t, rtol=0.0, atol=1e-9 * max(1.0, abs(t))))
        if idx.size == 0:
            raise KeyError(f"no snapshot recorded at t={t}")
        return self.histograms[idx[0]] / self.particles


def _law_params(config: SimulationConfig):
    law = config.law
    if law.kind.value == "ml" and law.gamma < 1.0:
        raise NotImplementedError("Monte Carlo sampling needs a Pareto or exponential law")
    return law.tau, law.gamma, law.is_exponential


def _single(config: SimulationConfig, seed, initial_sites=None, external_c=None):
    tau, gamma, exponential = _law_params(config)
    n = config.grid_points
    if initial_sites is None:
        sites = np.full(config.particles, n // 2, dtype=np.int64)
    else:
        sites = np.array(initial_sites, dtype=np.int64)
        if sites.ndim != 1 or sites.size < 1 or sites.min() < 0 or sites.max() >= n:
            raise ValueError("initial sites must be lattice indices in [0, grid_points)")
    if external_c is None:
        ext, use_ext = np.zeros(n), False
    else:
        ext, use_ext = np.ascontiguousarray(external_c, dtype=float), True
        if ext.shape != (n,):
            raise ValueError("external chemoattractant does not match the lattice size")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out_times = np.asarray(config.output_times, dtype=float)
    out, events = _event_loop(
        rng, sites, n, tau, gamma, exponential, float(config.beta), ext, use_ext, out_times
    )
    return out, int(events)


def run_single(config: SimulationConfig, seed, initial_sites=None, external_c=None) -> np.ndarray:
    """One realisation; returns particle counts per site at each output time.

    ``seed`` may be anything accepted by ``numpy.random.default_rng`` or a
    ready ``Generator``.  ``initial_sites`` overrides the default start (every
    particle at the origin); ``external_c`` replaces the self-chemoattractant
    by a fixed profile.
    """
    return _single(config, seed, initial_sites, external_c)[0]


def run_seeds(master_seed: int, runs: int) -> list[np.random.SeedSequence]:
    """Per-run seed sequences, a pure function of (master_seed, run index)."""
    return np.random.SeedSequence(master_seed).spawn(runs)


def run_ensemble(
    config: SimulationConfig,
    master_seed: int | None = None,
    workers: int | None = None,
    initial_sites=None,
    external_c=None,
) -> EnsembleResult:
    """Average ``config.runs`` independent realisations.

    Runs may execute on several threads; the reduction always adds run
    histograms in run-index order, so the result is bit-identical for any
    worker count.
    """
    master_seed = config.master_seed if master_seed is None else master_seed
    workers = config.workers if workers is None else workers
    seeds = run_seeds(master_seed, config.runs)

    def job(seq):
        return _single(config, np.random.default_rng(seq), initial_sites, external_c)

    if workers > 1 and config.runs > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, seeds))
    else:
        results = [job(s) for s in seeds]

    total = np.zeros_like(results[0][0])
    for counts, _ in results:
        total += counts
    events = sum(e for _, e in results)
    n_particles = config.particles if initial_sites is None else len(initial_sites)
    return EnsembleResult(
        output_times=np.asarray(config.output_times, dtype=float),
        histograms=total / config.runs,
        runs=config.runs,
        particles=n_particles,
        dx=config.dx,
        events=events,
        master_seed=master_seed,
    )


def mean_displacement(result: EnsembleResult) -> np.ndarray:
    return result.profiles() @ result.x


def mean_square_displacement(result: EnsembleResult) -> np.ndarray:
    """Ensemble MSD about the origin at each output time."""
    return result.profiles() @ result.x**2


def fit_msd_exponent(times: Sequence[float], msd: Sequence[float]) -> float:
    """Least-squares slope of log MSD against log t."""
    slope, _ = np.polyfit(np.log(times), np.log(msd), 1)
    return float(slope)
