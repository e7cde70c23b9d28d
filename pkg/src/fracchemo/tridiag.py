"""Periodic (cyclic) tridiagonal solves: Thomas recurrence + Sherman-Morrison correction."""
from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["SolveError", "thomas", "solve_cyclic", "cyclic_matvec"]


class SolveError(ArithmeticError):
    """Raised when a linear solve breaks down or misses its residual target."""


@njit(cache=True)
def _thomas(lower, diag, upper, rhs):
    n = diag.shape[0]
    cp = np.empty(n)
    x = np.empty(n)
    denom = diag[0]
    cp[0] = upper[0] / denom
    x[0] = rhs[0] / denom
    for i in range(1, n):
        denom = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / denom
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / denom
    for i in range(n - 2, -1, -1):
        x[i] -= cp[i] * x[i + 1]
    return x


def thomas(lower, diag, upper, rhs) -> np.ndarray:
    """Solve a non-periodic tridiagonal system.

    Row i reads ``lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]``;
    ``lower[0]`` and ``upper[-1]`` are ignored.
    """
    args = [np.ascontiguousarray(a, dtype=float) for a in (lower, diag, upper, rhs)]
    return _thomas(*args)


def cyclic_matvec(lower, diag, upper, x) -> np.ndarray:
    return lower * np.roll(x, 1) + diag * x + upper * np.roll(x, -1)


def solve_cyclic(lower, diag, upper, rhs, rtol: float = 1e-12) -> np.ndarray:
    """Solve a periodic tridiagonal system.

    Same row convention as :func:`thomas`, except that ``lower[0]`` couples
    row 0 to x[n-1] and ``upper[-1]`` couples row n-1 to x[0].  The residual
    is checked against ``rtol * ||rhs||_inf``.
    """
    lower = np.asarray(lower, dtype=float)
    diag = np.asarray(diag, dtype=float)
    upper = np.asarray(upper, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    n = diag.size
    if n < 3:
        raise ValueError("cyclic tridiagonal systems need at least 3 unknowns")
    corner_lo = lower[0]  # row 0, column n-1
    corner_up = upper[-1]  # row n-1, column 0
    shift = -diag[0]
    if shift == 0.0:
        raise SolveError("zero leading diagonal entry")
    bb = diag.copy()
    bb[0] -= shift
    bb[-1] -= corner_up * corner_lo / shift
    x = _thomas(lower, bb, upper, rhs)
    u = np.zeros(n)
    u[0] = shift
    u[-1] = corner_up
    z = _thomas(lower, bb, upper, u)
    denom = 1.0 + z[0] + corner_lo * z[-1] / shift
    if denom == 0.0:
        raise SolveError("Sherman-Morrison correction is singular")
    x -= ((x[0] + corner_lo * x[-1] / shift) / denom) * z
    if not np.all(np.isfinite(x)):
        raise SolveError("non-finite solution of cyclic tridiagonal system")
    resid = np.max(np.abs(cyclic_matvec(lower, diag, upper, x) - rhs))
    scale = np.max(np.abs(rhs))
    if resid > rtol * max(scale, np.finfo(float).tiny):
        raise SolveError(f"residual {resid:.3e} exceeds {rtol:g} * ||rhs|| = {rtol * scale:.3e}")
    return x
