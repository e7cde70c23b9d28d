"""Profile CSV/JSON export, re-import and profile comparison reports.

Profiles are written as ``t,x,n`` rows sorted by time then position, with
every number printed to 17 significant digits so that a read/write cycle
reproduces the file byte for byte.  All writes go to a temporary file in the
target directory which is then renamed over the destination.
"""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

__all__ = [
    "ProfileSet",
    "ComparisonReport",
    "as_profile_set",
    "export_profiles",
    "profiles_to_json",
    "read_profiles",
    "compare_profiles",
    "atomic_write",
]

_FMT = "%.17g"
_HEADER = ("t", "x", "n")


@dataclass
class ProfileSet:
    """Snapshots ``values[j, i]`` at ``times[j]`` and lattice positions ``x[i]``."""

    times: np.ndarray
    x: np.ndarray
    values: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.x = np.asarray(self.x, dtype=float).reshape(-1)
        self.values = np.asarray(self.values, dtype=float).reshape(self.times.size, self.x.size)

    def profile(self, t: float) -> np.ndarray:
        hit = np.flatnonzero(np.isclose(self.times, t, rtol=0.0, atol=1e-9 * max(1.0, abs(t))))
        if hit.size == 0:
            raise KeyError(f"no profile at t={t}")
        return self.values[hit[0]]


def as_profile_set(data) -> ProfileSet:
    """Accept a solver Trajectory, a Monte Carlo EnsembleResult or a ProfileSet."""
    if isinstance(data, ProfileSet):
        return data
    if hasattr(data, "histograms"):
        meta = {
            "source": "mc",
            "runs": data.runs,
            "particles": data.particles,
            "master_seed": data.master_seed,
            "events": data.events,
        }
        return ProfileSet(data.output_times, data.x, data.histograms, meta)
    if hasattr(data, "profiles") and hasattr(data, "times"):
        meta = {"source": "solve", "model": int(data.spec.model)}
        return ProfileSet(data.times, data.x, data.profiles, meta)
    raise TypeError(f"cannot export {type(data).__name__}")


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and an atomic rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(ps: ProfileSet) -> str:
    t_order = np.argsort(ps.times, kind="stable")
    x_order = np.argsort(ps.x, kind="stable")
    buf = io.StringIO()
    buf.write(",".join(_HEADER) + "\n")
    for j in t_order:
        t = _FMT % ps.times[j]
        for i in x_order:
            buf.write(f"{t},{_FMT % ps.x[i]},{_FMT % ps.values[j, i]}\n")
    return buf.getvalue()


def export_profiles(data, path=None) -> str:
    """Serialise profiles as CSV; writes to ``path`` when given and returns the text."""
    ps = as_profile_set(data)
    if ps.values.size == 0:
        raise ValueError("nothing to export")
    text = _csv_text(ps)
    if path is not None:
        atomic_write(path, text)
    return text


def profiles_to_json(data, config: dict[str, Any] | None = None) -> dict[str, Any]:
    """JSON counterpart of the CSV, with run metadata and the effective configuration."""
    ps = as_profile_set(data)
    return {
        "config": config,
        "meta": ps.meta,
        "times": ps.times.tolist(),
        "x": ps.x.tolist(),
        "n": ps.values.tolist(),
    }


def read_profiles(path) -> ProfileSet:
    """Load a ``t,x,n`` CSV written by :func:`export_profiles`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != _HEADER:
            raise ValueError(f"{path}: expected header t,x,n")
        rows = [(float(t), float(x), float(n)) for t, x, n in reader]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.array(rows)
    times = np.unique(arr[:, 0])
    x = np.unique(arr[:, 1])
    if arr.shape[0] != times.size * x.size:
        raise ValueError(f"{path}: rows do not form a complete (t, x) grid")
    values = np.full((times.size, x.size), np.nan)
    values[np.searchsorted(times, arr[:, 0]), np.searchsorted(x, arr[:, 1])] = arr[:, 2]
    if np.isnan(values).any():
        raise ValueError(f"{path}: duplicate (t, x) rows")
    return ProfileSet(times, x, values)


@dataclass
class ComparisonReport:
    times: list[float]
    l1: list[float]
    max_deviation: list[float]
    metadata: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "times": list(self.times),
            "l1": list(self.l1),
            "max_deviation": list(self.max_deviation),
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, path) -> None:
        atomic_write(path, self.to_json())


def _normalised(v: np.ndarray) -> np.ndarray:
    mass = v.sum()
    if not mass > 0:
        raise ValueError("cannot normalise a profile with non-positive mass")
    return v / mass


def compare_profiles(a, b, times: Sequence[float] | None = None, metadata=None) -> ComparisonReport:
    """L1 and maximum pointwise distance between unit-mass profiles at each time."""
    a, b = as_profile_set(a), as_profile_set(b)
    if a.x.shape != b.x.shape or not np.allclose(a.x, b.x, rtol=0.0, atol=1e-12):
        raise ValueError("profiles live on different lattices")
    if times is None:
        times = [t for t in a.times if np.any(np.isclose(b.times, t, rtol=0.0, atol=1e-9 * max(1.0, t)))]
        if not times:
            raise ValueError("profile sets share no output time")
    l1, dev = [], []
    for t in times:
        try:
            pa, pb = _normalised(a.profile(t)), _normalised(b.profile(t))
        except KeyError as exc:
            raise ValueError(f"time mismatch: {exc.args[0]}") from None
        diff = np.abs(pa - pb)
        l1.append(float(diff.sum()))
        dev.append(float(diff.max()))
    meta = {"a": a.meta, "b": b.meta}
    if metadata:
        meta.update(metadata)
    return ComparisonReport([float(t) for t in times], l1, dev, meta)
