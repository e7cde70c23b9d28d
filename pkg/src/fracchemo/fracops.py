"""Discrete fractional-calculus and memory-kernel operators on a uniform time grid.

Everything here treats the sampled function as piecewise linear in time:

* :func:`rl_l1` is the L1 approximation of the Riemann-Liouville derivative
  of order ``alpha`` (the exact derivative of the piecewise-linear
  interpolant at a grid point).
* :class:`ProductQuadrature` gives product-integration weights for
  ``int_0^t K(t - t') f(t') dt'`` with ``f`` piecewise linear.  It is used for
  the waiting-time convolutions (K = psi or Phi) and for the Riemann-Liouville
  fractional integral (K(u) = u^(q-1) / Gamma(q)).
"""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate

from .densities import WaitingTimeLaw, _check_evaluable

__all__ = [
    "FieldHistory",
    "l1_weights",
    "rl_l1",
    "rl_l1_modified",
    "ProductQuadrature",
    "volterra_weights",
    "fractional_integral_weights",
]


class FieldHistory:
    """Snapshots of a lattice field at t_m = m * dt, m = 0, 1, ...

    Storage grows geometrically; ``values`` is a read-only view of the
    populated rows.
    """

    def __init__(self, dt: float, n_sites: int, capacity: int = 64):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.dt = float(dt)
        self.n_sites = int(n_sites)
        self._data = np.empty((max(int(capacity), 1), self.n_sites))
        self._len = 0

    @classmethod
    def from_array(cls, dt: float, values) -> "FieldHistory":
        values = np.atleast_2d(np.asarray(values, dtype=float))
        hist = cls(dt, values.shape[1], capacity=values.shape[0])
        for row in values:
            hist.append(row)
        return hist

    def __len__(self) -> int:
        return self._len

    @property
    def last_index(self) -> int:
        return self._len - 1

    @property
    def values(self) -> np.ndarray:
        view = self._data[: self._len]
        view.flags.writeable = False
        return view

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self._len)

    def append(self, field) -> None:
        field = np.asarray(field, dtype=float)
        if field.shape != (self.n_sites,):
            raise ValueError(f"snapshot has shape {field.shape}, expected ({self.n_sites},)")
        if self._len == self._data.shape[0]:
            grown = np.empty((2 * self._data.shape[0], self.n_sites))
            grown[: self._len] = self._data[: self._len]
            self._data = grown
        self._data[self._len] = field
        self._len += 1

    def __getitem__(self, m: int) -> np.ndarray:
        if not 0 <= m < self._len:
            raise IndexError(m)
        return self._data[m]


# --------------------------------------------------------------------------
# L1 scheme


def _check_order(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"fractional order must lie in (0, 1), got {alpha}")
    return alpha


def l1_weights(alpha: float, dt: float, m: int) -> np.ndarray:
    """Coefficients c_j with D^alpha f(t_m) ~= sum_j c_j f(t_j), j = 0..m."""
    alpha = _check_order(alpha)
    if m < 1:
        raise ValueError("the L1 operator needs at least one step of history (m >= 1)")
    k = np.arange(m + 1, dtype=float)
    w = (k + 1.0) ** (1.0 - alpha) - k ** (1.0 - alpha)
    scale = dt ** (-alpha) / math.gamma(2.0 - alpha)
    c = np.empty(m + 1)
    c[m] = w[0]
    # f_j enters with +w_{m-j} (increment j-1 -> j) and -w_{m-j-1} (increment j -> j+1)
    c[1:m] = w[m - 1 : 0 : -1] - w[m - 2 :: -1][: m - 1]
    c[0] = -w[m - 1]
    c *= scale
    c[0] += (m * dt) ** (-alpha) / math.gamma(1.0 - alpha)
    return c


def _series(history: FieldHistory, site, m: int) -> np.ndarray:
    if not 0 <= m <= history.last_index:
        raise ValueError(f"history is populated through index {history.last_index}, requested {m}")
    vals = history.values[: m + 1]
    return vals if site is None else vals[:, site]


def rl_l1(history: FieldHistory, alpha: float, site=None, m: int | None = None):
    """L1 approximation of the Riemann-Liouville derivative of order ``alpha`` at t_m.

    ``site=None`` evaluates every lattice site at once; ``m`` defaults to the
    newest snapshot.
    """
    m = history.last_index if m is None else m
    c = l1_weights(alpha, history.dt, m)
    return c @ _series(history, site, m)


def rl_l1_modified(history: FieldHistory, alpha: float, k: float, site=None, m: int | None = None):
    """exp(k t) D^alpha [exp(-k t) f] at t_m, using the L1 scheme."""
    m = history.last_index if m is None else m
    c = l1_weights(alpha, history.dt, m)
    t = history.dt * np.arange(m + 1)
    tilt = np.exp(k * (t[-1] - t))
    return (c * tilt) @ _series(history, site, m)


# --------------------------------------------------------------------------
# Product integration against piecewise-linear integrands


class ProductQuadrature:
    """Weights for ``int_0^{t_m} K(t_m - u) f(u) du`` with ``f`` piecewise linear.

    Built from two per-interval moments of the kernel, for k = 0..n-1:

        mass[k]  = int_{t_k}^{t_k+1} K(u) du
        first[k] = int_{t_k}^{t_k+1} K(u) (u - t_k) / dt du

    The weight of f(t_l) is a[m-l] + b[m-l-1] with b = first and
    a = mass - first (terms outside 0..m-1 dropped).
    """

    def __init__(self, mass, first):
        self.mass = np.asarray(mass, dtype=float)
        self.first = np.asarray(first, dtype=float)
        self.a = self.mass - self.first
        self.b = self.first

    @property
    def max_steps(self) -> int:
        return self.mass.size

    def weights(self, m: int) -> np.ndarray:
        if m < 1:
            raise ValueError("m must be >= 1")
        if m > self.max_steps:
            raise ValueError(f"quadrature prepared for {self.max_steps} steps, requested {m}")
        w = np.zeros(m + 1)
        w[1:] += self.a[:m][::-1]
        w[:m] += self.b[:m][::-1]
        return w

    def increment(self, m: int) -> np.ndarray:
        """Weights (length m+2) of the convolution at t_{m+1} minus that at t_m."""
        inc = self.weights(m + 1)
        if m >= 1:
            inc[: m + 1] -= self.weights(m)
        return inc

    @classmethod
    def from_kernel(cls, kernel, dt: float, n: int, epsabs: float = 1e-10) -> "ProductQuadrature":
        """Moments by adaptive quadrature, for kernels without closed forms."""
        mass = np.empty(n)
        first = np.empty(n)
        for k in range(n):
            lo, hi = k * dt, (k + 1) * dt
            mass[k] = integrate.quad(kernel, lo, hi, epsabs=epsabs, epsrel=1e-12)[0]
            first[k] = integrate.quad(
                lambda u: kernel(u) * (u - lo) / dt, lo, hi, epsabs=epsabs, epsrel=1e-12
            )[0]
        return cls(mass, first)


def _pow_moments(s, L, p):
    """s^p (rho^p - 1) / p with rho = exp(L), for p != 0."""
    return s**p * np.expm1(p * L) / p


def _pareto_moments(law: WaitingTimeLaw, dt: float, n: int, kernel: str):
    tau, g = law.tau, law.gamma
    s = 1.0 + dt * np.arange(n) / tau
    L = np.log1p((dt / tau) / s)
    if kernel == "psi":
        mass = -np.power(s, -g) * np.expm1(-g * L)
        first = (g * tau / dt) * (_pow_moments(s, L, 1.0 - g) - s * _pow_moments(s, L, -g))
    else:
        mass = tau * _pow_moments(s, L, 1.0 - g)
        first = (tau * tau / dt) * (_pow_moments(s, L, 2.0 - g) - s * _pow_moments(s, L, 1.0 - g))
    return mass, first


def _exponential_moments(law: WaitingTimeLaw, dt: float, n: int, kernel: str):
    tau = law.tau
    h = dt / tau
    e = np.exp(-dt * np.arange(n) / tau)
    mass = -e * np.expm1(-h)
    first = e * (-np.expm1(-h) - h * math.exp(-h)) / h
    if kernel == "survival":
        mass, first = tau * mass, tau * first
    return mass, first


def waiting_time_quadrature(
    law: WaitingTimeLaw, dt: float, n: int, kernel: str = "psi", rate: float = 0.0
) -> ProductQuadrature:
    """Product quadrature for K = psi or Phi, optionally tilted by exp(rate * u)."""
    if kernel not in ("psi", "survival"):
        raise ValueError("kernel must be 'psi' or 'survival'")
    _check_evaluable(law)
    if rate != 0.0:
        base = law.pdf if kernel == "psi" else law.survival
        return ProductQuadrature.from_kernel(lambda u: math.exp(rate * u) * base(u), dt, n)
    if law.is_exponential:
        return ProductQuadrature(*_exponential_moments(law, dt, n, kernel))
    return ProductQuadrature(*_pareto_moments(law, dt, n, kernel))


def volterra_weights(
    law: WaitingTimeLaw, dt: float, m: int, kernel: str = "psi", rate: float = 0.0
) -> np.ndarray:
    """Weights w_l with int_0^{t_m} K(t_m - t') n(t') dt' = sum_l w_l n(t_l)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return waiting_time_quadrature(law, dt, m, kernel, rate).weights(m)


def fractional_integral_quadrature(order: float, dt: float, n: int) -> ProductQuadrature:
    """Product quadrature for the Riemann-Liouville integral of order ``order`` in (0, 1]."""
    q = float(order)
    if not 0.0 < q <= 1.0:
        raise ValueError(f"integral order must lie in (0, 1], got {order}")
    k = np.arange(n, dtype=float)
    mass = np.empty(n)
    first = np.empty(n)
    mass[0] = 1.0 / q
    first[0] = 1.0 / (q + 1.0)
    if n > 1:
        kk = k[1:]
        L = np.log1p(1.0 / kk)
        mass[1:] = _pow_moments(kk, L, q)
        first[1:] = _pow_moments(kk, L, q + 1.0) - kk * _pow_moments(kk, L, q)
    scale = dt**q / math.gamma(q)
    return ProductQuadrature(scale * mass, scale * first)


def fractional_integral_weights(order: float, dt: float, m: int) -> np.ndarray:
    return fractional_integral_quadrature(order, dt, m).weights(m)
