"""Trainability diagnostics for chaotic parameterizations.

* cost-landscape Lyapunov spectrum from exact layer gradients
* sweeps of the linearizability bound eta over depth
* second moments of the nonlinear control remainder (control noise)
* empirical CDF of cost differentials under small random perturbations
* a roughness score for 2D landscape scans
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import chaos, schemes, simulator
from .sat import CostDiagonal
from .schemes import SchemeSpec

TINY = 1e-300


def _log_h_along_orbit(theta: float, n: int, r: float = chaos.R_CHAOTIC):
    """``ln|h|`` and sign of ``d/dtheta l^k(theta)`` for k = 0..n."""
    xs = chaos.orbit(theta, n, r)[:-1]
    factors = r * (1.0 - 2.0 * xs)
    with np.errstate(divide="ignore"):
        logs = np.concatenate([[0.0], np.cumsum(np.log(np.abs(factors)))])
    sign = np.concatenate([[1.0], np.cumprod(np.sign(factors))])
    return logs, sign


def _log_abs_signed_sum(log_mag: np.ndarray, sign: np.ndarray) -> float:
    ok = np.isfinite(log_mag) & (sign != 0)
    if not np.any(ok):
        return -math.inf
    top = log_mag[ok].max()
    total = float(np.sum(sign[ok] * np.exp(log_mag[ok] - top)))
    return top + math.log(abs(total)) if total != 0.0 else -math.inf


@dataclass(frozen=True)
class LleReport:
    theta: np.ndarray
    c: int
    depths: np.ndarray  # p = 2..p_max
    cost_lle: np.ndarray  # (len(depths), 2); columns i = 1 (cost), 2 (mixer)
    phase_lle: np.ndarray  # same shape, phase-space exponents
    gle_target: float
    flags: list[str] = field(default_factory=list)

    def rows(self):
        for k, p in enumerate(self.depths):
            yield (int(p), *map(float, self.cost_lle[k]), *map(float, self.phase_lle[k]))


def cost_lle_spectrum(spec: SchemeSpec, theta, diag: CostDiagonal, p_max: int) -> LleReport:
    """Lyapunov exponents of F along theta_1 and theta_2 for p = 2..p_max.

    For direction i and depth p the stretched differential is
    ``sum_m h_{m,c}(theta_i) dF^{(p)}/d(angle_i of layer m)`` and the
    reference is the depth-1 derivative ``dF^{(1)}/d(angle_i of layer 1)``.
    Sums are carried out in log space so large c(p-1) does not overflow.
    """
    if spec.kind != "pure":
        raise ValueError("the cost-landscape spectrum is defined for the pure chaotic scheme")
    if p_max < 2:
        raise ValueError("p_max must be >= 2")
    theta = np.asarray(theta, dtype=float)
    c = spec.c
    flags: list[str] = []
    logs_signs = [_log_h_along_orbit(float(theta[i]), c * (p_max - 1)) for i in (0, 1)]
    base = simulator.layer_angle_gradient(spec.with_depth(1), theta, diag)[0]
    depths = np.arange(2, p_max + 1)
    cost = np.full((depths.size, 2), np.nan)
    phase = np.full((depths.size, 2), np.nan)
    for k, p in enumerate(depths):
        grad = simulator.layer_angle_gradient(spec.with_depth(int(p)), theta, diag)
        idx = c * np.arange(p)
        for i in (0, 1):
            logs, sign = logs_signs[i]
            with np.errstate(divide="ignore"):
                lg = np.log(np.abs(grad[:, i]))
            lnum = _log_abs_signed_sum(logs[idx] + lg, sign[idx] * np.sign(grad[:, i]))
            if abs(base[i]) < TINY:
                flags.append(f"p={p} i={i + 1}: first-layer derivative vanishes")
                cost[k, i] = math.inf
            else:
                cost[k, i] = (lnum - math.log(abs(base[i]))) / (p - 1)
            phase[k, i] = chaos.phase_space_lle(float(theta[i]), int(p), c)
    return LleReport(theta, c, depths, cost, phase, chaos.gle(c), flags)


@dataclass(frozen=True)
class EtaTable:
    c: int
    depths: np.ndarray
    median: np.ndarray
    q25: np.ndarray
    q75: np.ndarray
    n_infinite: np.ndarray
    slope: float  # of ln(median eta) against p
    intercept: float
    n_samples: int

    def rows(self):
        for k, p in enumerate(self.depths):
            yield int(p), float(self.median[k]), float(self.q25[k]), float(self.q75[k]), int(self.n_infinite[k])


def eta_sweep(c: int, p_range, n_samples: int = 10_000, seed: int = 0) -> EtaTable:
    """Median and IQR of eta over uniform theta; log-median fit against depth.

    p=1 is dropped (eta is infinite there). Infinite samples are counted and
    excluded.
    """
    if n_samples < 100:
        raise ValueError("n_samples must be >= 100")
    depths = np.array([p for p in p_range if p >= 2])
    if depths.size < 2:
        raise ValueError("need at least two depths >= 2")
    theta = np.random.default_rng(seed).uniform(0.0, 1.0, n_samples)
    med, lo, hi, n_inf = [], [], [], []
    for p in depths:
        le = chaos.log_eta_bound(theta, int(p), c)
        finite = le[np.isfinite(le)]
        n_inf.append(le.size - finite.size)
        q = np.percentile(finite, [25, 50, 75])
        lo.append(q[0])
        med.append(q[1])
        hi.append(q[2])
    log_med = np.array(med)
    slope, intercept = np.polyfit(depths, log_med, 1)
    return EtaTable(c, depths, np.exp(log_med), np.exp(lo), np.exp(hi), np.array(n_inf),
                    float(slope), float(intercept), n_samples)


def control_remainder(theta, delta, n: int, r: float = chaos.R_CHAOTIC):
    """``l^n(theta + delta) - l^n(theta) - delta * (l^n)'(theta)`` without cancellation.

    With ``d_k`` the orbit separation and ``e_k`` the remainder,
    ``d_{k+1} = r d_k (1 - 2 x_k - d_k)`` and
    ``e_{k+1} = r (1 - 2 x_k) e_k - r d_k**2``, starting from
    ``d_0 = delta, e_0 = 0``. Both recursions are algebraically exact.
    """
    x = np.array(theta, dtype=float)
    d = np.broadcast_to(np.asarray(delta, dtype=float), x.shape).copy()
    e = np.zeros_like(x)
    for _ in range(n):
        a = r * (1.0 - 2.0 * x)
        e = a * e - r * d * d
        d = r * d * (1.0 - 2.0 * x - d)
        x = r * x * (1.0 - x)
    return e


def _remainders_by_layer(theta: np.ndarray, delta, c: int, depths) -> dict[int, np.ndarray]:
    """Remainder at each requested depth in one pass over the orbit."""
    r = chaos.R_CHAOTIC
    x = np.array(theta, dtype=float)
    d = np.broadcast_to(np.asarray(delta, dtype=float), x.shape).copy()
    e = np.zeros_like(x)
    wanted = {c * (p - 1): p for p in depths}
    out = {}
    for k in range(max(wanted) + 1):
        if k in wanted:
            out[wanted[k]] = e.copy()
        a = r * (1.0 - 2.0 * x)
        e = a * e - r * d * d
        d = r * d * (1.0 - 2.0 * x - d)
        x = r * x * (1.0 - x)
    return out


def noise_second_moment(theta, c: int, depths, delta_theta: float) -> dict[int, np.ndarray]:
    """Per-sample ``zeta_{p,p}`` for one control, averaged exactly over delta = +-delta_theta."""
    theta = np.asarray(theta, dtype=float)
    plus = _remainders_by_layer(theta, delta_theta, c, depths)
    minus = _remainders_by_layer(theta, -delta_theta, c, depths)
    return {p: 0.5 * (plus[p] ** 2 + minus[p] ** 2) for p in depths}


def noise_correlation(theta, c: int, m1: int, m2: int, delta_theta: float) -> np.ndarray:
    """2x2 ``zeta_{m1,m2}`` for the decoupled scheme, exact over the 4 sign pairs.

    ``theta`` is one point of shape (2,) or samples of shape (2, n); in the
    latter case the result is the sample mean.
    """
    theta = np.asarray(theta, dtype=float)
    xi = {}
    for s in (1.0, -1.0):
        for m in (m1, m2):
            lay = _remainders_by_layer(theta, s * delta_theta, c, [m])
            xi[s, m] = lay[m]
    z = np.zeros((2, 2))
    for s1 in (1.0, -1.0):
        for s2 in (1.0, -1.0):
            signs = (s1, s2)
            for i in (0, 1):
                for j in (0, 1):
                    z[i, j] += 0.25 * np.mean(xi[signs[i], m1][i] * xi[signs[j], m2][j])
    return z


@dataclass(frozen=True)
class NoiseMomentReport:
    c: int
    depths: np.ndarray
    delta_theta: float
    mean: np.ndarray  # (len(depths), 2): mean of zeta_{p,p,ii} / delta^2 per control
    spread: np.ndarray  # standard deviation, same shape
    n_samples: int
    underflow: bool
    samples: np.ndarray = field(repr=False)  # (len(depths), n_samples, 2), normalized

    def rows(self):
        for k, p in enumerate(self.depths):
            yield int(p), float(self.mean[k, 0]), float(self.mean[k, 1]), float(self.spread[k, 0]), float(self.spread[k, 1])


def control_noise_moment(c: int, p_range, delta_theta: float = 1e-18, n_samples: int = 10_000,
                         seed: int = 0) -> NoiseMomentReport:
    """Phase-space average of the control-noise second moment, per depth.

    Each control gets its own independent theta samples.
    """
    if delta_theta <= 0:
        raise ValueError("delta_theta must be positive")
    depths = np.array(sorted(set(int(p) for p in p_range)))
    if depths.size == 0 or depths[0] < 1:
        raise ValueError("depths must be >= 1")
    theta = np.random.default_rng(seed).uniform(0.0, 1.0, (n_samples, 2)).ravel()
    plus = _remainders_by_layer(theta, delta_theta, c, depths)
    minus = _remainders_by_layer(theta, -delta_theta, c, depths)
    # divide before squaring so delta**2 itself cannot underflow
    samples = np.stack([
        (0.5 * ((plus[p] / delta_theta) ** 2 + (minus[p] / delta_theta) ** 2)).reshape(n_samples, 2)
        for p in depths
    ])
    underflow = bool(np.any([np.all(samples[k] == 0) for k, p in enumerate(depths) if p > 1]))
    return NoiseMomentReport(c, depths, delta_theta, samples.mean(axis=1), samples.std(axis=1),
                             n_samples, underflow, samples)


@dataclass(frozen=True)
class DifferentialCdf:
    deltas: np.ndarray
    phi: np.ndarray
    differentials: np.ndarray = field(repr=False)


def differential_cdf(spec: SchemeSpec, theta, diag: CostDiagonal, delta_grid,
                     n_perturbations: int = 200, seed: int = 0, scale: float = 1e-3) -> DifferentialCdf:
    """Empirical ``P(|F(theta + dtheta) - F(theta)| < Delta)``.

    ``dtheta = scale * s`` with s a uniform random sign vector; perturbed
    points are clipped to the unit box.
    """
    theta = np.asarray(theta, dtype=float)
    rng = np.random.default_rng(seed)
    f0 = simulator.cost_value(spec, theta, diag)
    n = theta.shape[0]
    diffs = np.empty(n_perturbations)
    for k in range(n_perturbations):
        s = rng.integers(0, 2, size=n) * 2 - 1
        diffs[k] = abs(simulator.cost_value(spec, np.clip(theta + scale * s, 0.0, 1.0), diag) - f0)
    deltas = np.asarray(delta_grid, dtype=float)
    phi = (diffs[None, :] < deltas[:, None]).mean(axis=1)
    return DifferentialCdf(deltas, phi, diffs)


def mixing_metric(scan: simulator.LandscapeScan) -> float:
    """Mean |F| jump between horizontally adjacent grid cells over (c_max - c_min)."""
    if scan.c_max == scan.c_min:
        raise ValueError("landscape metric undefined when c_max == c_min")
    jumps = np.abs(np.diff(scan.values, axis=1))
    return float(jumps.mean() / (scan.c_max - scan.c_min))
