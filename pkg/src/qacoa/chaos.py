"""The r=4 logistic map, its iterated derivatives and Lyapunov quantities.

Everything runs in float64. Long orbits are therefore shadow orbits of the
exact map; they stay pseudo-random and follow the arcsine invariant density,
which is all the statistics here rely on.

Most functions accept scalars or numpy arrays of seeds and broadcast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

R_CHAOTIC = 4.0
NEAR_HALF_TOL = 1e-12


class DegenerateOrbitError(ValueError):
    """The orbit fell onto a fixed point or short cycle."""


def _check_unit(x) -> None:
    arr = np.asarray(x, dtype=float)
    if np.any(~((arr >= 0.0) & (arr <= 1.0))):
        raise ValueError(f"logistic map argument outside [0, 1]: {x!r}")


def logistic(x, r: float = R_CHAOTIC):
    """One application of ``x -> r x (1 - x)``."""
    _check_unit(x)
    return r * x * (1.0 - x)


def iterate(x, n: int, r: float = R_CHAOTIC):
    """n-fold composition of the logistic map (n=0 is the identity)."""
    if n < 0:
        raise ValueError("n must be non-negative")
    _check_unit(x)
    for _ in range(n):
        x = r * x * (1.0 - x)
    return x


def orbit(x: float, n: int, r: float = R_CHAOTIC) -> np.ndarray:
    """``[x, l(x), ..., l^n(x)]``."""
    _check_unit(x)
    out = np.empty(n + 1)
    out[0] = x
    for i in range(n):
        out[i + 1] = r * out[i] * (1.0 - out[i])
    return out


def gle(c: int) -> float:
    """Ergodic Lyapunov exponent of ``l^c`` for r=4."""
    return c * math.log(2.0)


def arcsine_pdf(z):
    z = np.asarray(z, dtype=float)
    return 1.0 / (np.pi * np.sqrt(z * (1.0 - z)))


def arcsine_cdf(z):
    z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
    return 2.0 / np.pi * np.arcsin(np.sqrt(z))


def _derivative_pair(theta, n: int, r: float):
    """Value and theta-derivative of ``d/dtheta l^n(theta)`` by product rule.

    With ``h_k = prod_{i<k} a_i`` and ``a_i = r (1 - 2 x_i)``:
    ``h_{k+1} = h_k a_k`` and ``h'_{k+1} = h'_k a_k - 2 r h_k**2``.
    No division, so orbit points at 1/2 are harmless.
    """
    x = np.array(theta, dtype=float)
    h = np.ones_like(x)
    dh = np.zeros_like(x)
    for _ in range(n):
        a = r * (1.0 - 2.0 * x)
        dh = dh * a - 2.0 * r * h * h
        h = h * a
        x = r * x * (1.0 - x)
    return h, dh


def _as_output(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def h_derivative(theta, m: int, c: int, r: float = R_CHAOTIC):
    """``h_{m,c}(theta) = d/dtheta l^{c(m-1)}(theta)``; 1 for m=1.

    Overflows to +-inf once ``c(m-1)`` passes roughly 1000 iterations.
    """
    if m < 1 or c < 1:
        raise ValueError("m and c must be >= 1")
    _check_unit(theta)
    with np.errstate(over="ignore", invalid="ignore"):
        h, _ = _derivative_pair(theta, c * (m - 1), r)
    return _as_output(h, theta)


def h_second(theta, m: int, c: int, r: float = R_CHAOTIC):
    """``d/dtheta h_{m,c}(theta)`` via product-rule accumulation."""
    if m < 1 or c < 1:
        raise ValueError("m and c must be >= 1")
    _check_unit(theta)
    with np.errstate(over="ignore", invalid="ignore"):
        _, dh = _derivative_pair(theta, c * (m - 1), r)
    return _as_output(dh, theta)


def log_factors(theta: float, n: int, r: float = R_CHAOTIC) -> np.ndarray:
    """``ln|r (1 - 2 l^{i-1}(theta))|`` for i = 1..n (may contain -inf)."""
    xs = orbit(theta, n, r)[:-1]
    with np.errstate(divide="ignore"):
        return np.log(np.abs(r * (1.0 - 2.0 * xs)))


def phase_space_lle(theta, p: int, c: int, r: float = R_CHAOTIC):
    """Finite-depth phase-space Lyapunov exponent of the pure chaotic scheme.

    Sum of the per-iterate log stretch factors over ``c(p-1)`` iterations,
    divided by ``p - 1``. An exact zero factor gives ``-inf``.
    """
    if p < 2:
        raise ValueError("the LLE needs p >= 2")
    _check_unit(theta)
    x = np.array(theta, dtype=float)
    total = np.zeros_like(x)
    with np.errstate(divide="ignore"):
        for _ in range(c * (p - 1)):
            total += np.log(np.abs(r * (1.0 - 2.0 * x)))
            x = r * x * (1.0 - x)
    return _as_output(total / (p - 1), theta)


def near_half_count(theta: float, n: int, tol: float = NEAR_HALF_TOL, r: float = R_CHAOTIC) -> int:
    """How many of the first n orbit points satisfy ``|1 - 2x| < tol``."""
    xs = orbit(theta, n, r)[:-1]
    return int(np.count_nonzero(np.abs(1.0 - 2.0 * xs) < tol))


def log_eta_bound(theta, p: int, c: int, r: float = R_CHAOTIC):
    """Natural log of ``|2 h_{p,c} / h'_{p,c}|``, overflow-safe.

    ``h'`` scales like ``h**2``, so the pair (h, h') is renormalized as
    ``(h / t, h' / t**2)`` each step while ``ln t`` is accumulated. This keeps
    the ratio finite for depths where h itself would overflow.
    Returns ``+inf`` for p=1 (``h' = 0``) and ``-inf`` where ``h = 0``.
    """
    if p < 1 or c < 1:
        raise ValueError("p and c must be >= 1")
    _check_unit(theta)
    x = np.array(theta, dtype=float)
    u = np.ones_like(x)
    v = np.zeros_like(x)
    log_s = np.zeros_like(x)
    for _ in range(c * (p - 1)):
        a = r * (1.0 - 2.0 * x)
        v = v * a - 2.0 * r * u * u
        u = u * a
        x = r * x * (1.0 - x)
        t = np.maximum(np.abs(u), np.sqrt(np.abs(v)))
        t = np.where(t > 0.0, t, 1.0)
        u = u / t
        v = v / (t * t)
        log_s += np.log(t)
    with np.errstate(divide="ignore"):
        out = math.log(2.0) + np.log(np.abs(u)) - np.log(np.abs(v)) - log_s
    out = np.where(v == 0.0, np.inf, out)
    return _as_output(out, theta)


def eta_bound(theta, p: int, c: int, r: float = R_CHAOTIC):
    """Largest per-parameter step for which the map stays roughly linear."""
    with np.errstate(over="ignore"):
        out = np.exp(np.asarray(log_eta_bound(theta, p, c, r)))
    return _as_output(out, theta)


@dataclass(frozen=True)
class OrbitRecord:
    theta0: float
    c: int
    iterates: np.ndarray  # layer angles l^{c(m-1)}(theta0), m = 1..p
    derivatives: np.ndarray  # h_{m,c}(theta0), m = 1..p
    lle: np.ndarray  # phase-space LLE at depth m (nan at m=1)
    near_half: int  # orbit points with |1 - 2x| < NEAR_HALF_TOL

    def rows(self):
        for m in range(1, len(self.iterates) + 1):
            yield m, self.iterates[m - 1], self.derivatives[m - 1], self.lle[m - 1]


def orbit_record(theta0: float, p: int, c: int, r: float = R_CHAOTIC) -> OrbitRecord:
    n = c * (p - 1)
    xs = orbit(theta0, n, r)
    with np.errstate(divide="ignore", over="ignore"):
        factors = r * (1.0 - 2.0 * xs[:-1])
        cum_h = np.concatenate([[1.0], np.cumprod(factors)])
        cum_log = np.concatenate([[0.0], np.cumsum(np.log(np.abs(factors)))])
    layer_idx = c * np.arange(p)
    m = np.arange(1, p + 1)
    lle = np.full(p, np.nan)
    lle[1:] = cum_log[layer_idx[1:]] / (m[1:] - 1)
    near = int(np.count_nonzero(np.abs(factors) < r * NEAR_HALF_TOL))
    return OrbitRecord(theta0, c, xs[layer_idx], cum_h[layer_idx], lle, near)


def invariant_density_check(n_samples: int, burn_in: int = 1000, seed: int = 0, x0: float | None = None) -> float:
    """KS distance between a long orbit and the arcsine law.

    The starting point is drawn from ``seed`` unless ``x0`` is given.
    """
    if n_samples < 10_000:
        raise ValueError("need at least 1e4 samples")
    if x0 is None:
        x0 = float(np.random.default_rng(seed).uniform(0.0, 1.0))
    xs = orbit(x0, burn_in + n_samples)[burn_in + 1:]
    tail = xs[-1000:]
    if np.ptp(tail) == 0.0 or np.unique(tail).size < 16:
        raise DegenerateOrbitError(f"orbit from x0={x0!r} collapsed onto a short cycle")
    return float(stats.kstest(xs, arcsine_cdf).statistic)
