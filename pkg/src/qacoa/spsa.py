"""Box-constrained first-order SPSA on the unit cube.

Gain sequences (k = j - 1 counts completed iterations, so the first update
uses k = 0)::

    a_k = a  / (A + k + 1) ** alpha
    c_k = c0 / (k + 1) ** gamma

``a`` is calibrated from one two-point probe at the starting point so that
the first update moves each parameter by about ``delta_theta_min``.
Probe points and updated iterates are projected (clipped) onto [0, 1]^n.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import chaos, simulator
from .sat import CostDiagonal
from .schemes import SchemeSpec, n_theta

Objective = Callable[[np.ndarray], float]


class CalibrationError(RuntimeError):
    """The calibration probe saw no change in the objective."""


class ObjectiveError(RuntimeError):
    """The objective raised during an SPSA iteration."""

    def __init__(self, iteration: int, cause: BaseException):
        super().__init__(f"objective failed at iteration {iteration}: {cause!r}")
        self.iteration = iteration


@dataclass(frozen=True)
class SpsaConfig:
    j_max: int = 1000
    alpha_gain: float = 0.602
    gamma_gain: float = 0.101
    A: float | None = None  # None means j_max / 100
    c0: float = 0.1
    delta_theta_min: float = 0.01
    seed: int = 0
    a: float | None = None  # skip calibration when given
    ergodic_gain_rescale: bool = False

    def __post_init__(self):
        if self.j_max < 1:
            raise ValueError("j_max must be >= 1")
        if not 0 < self.gamma_gain < self.alpha_gain <= 1:
            raise ValueError("need 0 < gamma_gain < alpha_gain <= 1")
        if self.c0 <= 0 or self.delta_theta_min <= 0:
            raise ValueError("c0 and delta_theta_min must be positive")

    @property
    def stability(self) -> float:
        return self.j_max / 100 if self.A is None else self.A

    def gain_a(self, a: float, j: int) -> float:
        return a / (self.stability + j) ** self.alpha_gain

    def gain_c(self, j: int, c0: float | None = None) -> float:
        return (self.c0 if c0 is None else c0) / j**self.gamma_gain

    def to_dict(self) -> dict:
        return asdict(self)


def rescaled_c0(cfg: SpsaConfig, spec: SchemeSpec) -> float:
    """c0 times ``exp(-c ln2 (p-1))`` (floored at 1e-12) when the flag is set."""
    if not cfg.ergodic_gain_rescale or spec.kind == "standard":
        return cfg.c0
    return max(cfg.c0 * math.exp(-chaos.gle(spec.c) * (spec.p - 1)), 1e-12)


def _signs(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(0, 2, size=n) * 2 - 1


def two_point_gradient(objective: Objective, theta: np.ndarray, ck: float, signs: np.ndarray) -> np.ndarray:
    plus = np.clip(theta + ck * signs, 0.0, 1.0)
    minus = np.clip(theta - ck * signs, 0.0, 1.0)
    diff = objective(plus) - objective(minus)
    return diff / (2.0 * ck * signs)


def calibrate_a(objective: Objective, theta_1, cfg: SpsaConfig, rng: np.random.Generator, c0: float | None = None) -> float:
    """``delta_theta_min * (A + 1)**alpha / g`` with g the geometric mean of
    the nonzero components of one gradient estimate at ``theta_1``."""
    theta_1 = np.asarray(theta_1, dtype=float)
    ghat = two_point_gradient(objective, theta_1, cfg.gain_c(1, c0), _signs(rng, theta_1.shape[0]))
    return a_from_gradient(ghat, cfg)


def a_from_gradient(ghat: np.ndarray, cfg: SpsaConfig) -> float:
    mags = np.abs(np.asarray(ghat, dtype=float))
    mags = mags[mags > 0]
    if mags.size == 0:
        raise CalibrationError("all components of the calibration gradient are zero")
    g_tilde = math.exp(float(np.mean(np.log(mags))))
    return cfg.delta_theta_min * (cfg.stability + 1) ** cfg.alpha_gain / g_tilde


def spsa_step(objective: Objective, theta_j, j: int, a: float, cfg: SpsaConfig,
              rng: np.random.Generator, c0: float | None = None):
    """One update from iterate ``theta_j`` (j is 1-based).

    Returns ``(theta_next, a_j, c_j, signs)``.
    """
    theta_j = np.asarray(theta_j, dtype=float)
    aj = cfg.gain_a(a, j)
    cj = cfg.gain_c(j, c0)
    signs = _signs(rng, theta_j.shape[0])
    try:
        ghat = two_point_gradient(objective, theta_j, cj, signs)
    except Exception as exc:
        raise ObjectiveError(j, exc) from exc
    theta_next = np.clip(theta_j - aj * ghat, 0.0, 1.0)
    return theta_next, aj, cj, signs


@dataclass
class SpsaTrace:
    """Per-iteration record; row j-1 holds the iterate after update j."""

    theta0: np.ndarray
    a: float
    c0: float
    thetas: np.ndarray
    f: np.ndarray
    ar: np.ndarray
    misassignment: np.ndarray
    gain_a: np.ndarray
    gain_c: np.ndarray
    signs: np.ndarray
    n_evals: int = 0
    n_calibration_evals: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.f.shape[0]

    @property
    def best_index(self) -> int:
        return int(np.argmin(self.f))

    @property
    def best_f(self) -> float:
        return float(self.f[self.best_index])

    @property
    def best_theta(self) -> np.ndarray:
        return self.thetas[self.best_index]

    @property
    def final_theta(self) -> np.ndarray:
        return self.thetas[-1]

    def best_index_upto(self, j: int) -> int:
        """Row of the lowest clean F among iterations 1..j (first one on ties)."""
        return int(np.argmin(self.f[:j]))

    def at(self, j: int) -> dict:
        """Clean-evaluation summary after iteration j (1-based).

        ``ar``/``misassignment``/``f`` refer to theta*, the best iterate seen
        so far; the ``last_*`` entries are for the iterate theta_j itself.
        """
        i = j - 1
        b = self.best_index_upto(j)
        return {"j": j, "f": float(self.f[b]), "ar": float(self.ar[b]),
                "misassignment": float(self.misassignment[b]),
                "last_f": float(self.f[i]), "last_ar": float(self.ar[i]),
                "last_misassignment": float(self.misassignment[i])}

    def to_dict(self) -> dict:
        return {
            "theta0": self.theta0.tolist(),
            "a": self.a,
            "c0": self.c0,
            "thetas": self.thetas.tolist(),
            "f": self.f.tolist(),
            "ar": self.ar.tolist(),
            "misassignment": self.misassignment.tolist(),
            "gain_a": self.gain_a.tolist(),
            "gain_c": self.gain_c.tolist(),
            "signs": self.signs.tolist(),
            "n_evals": self.n_evals,
            "n_calibration_evals": self.n_calibration_evals,
            "best_f": self.best_f,
            "best_theta": self.best_theta.tolist(),
            "meta": self.meta,
        }

    def csv_rows(self):
        for i in range(len(self)):
            yield (i + 1, float(self.f[i]), float(self.ar[i]), float(self.misassignment[i]),
                   float(self.gain_a[i]), float(self.gain_c[i]))


def minimize(probe: Objective, clean: Callable[[np.ndarray], simulator.EvalResult],
             theta0, cfg: SpsaConfig, rng: np.random.Generator,
             c0: float | None = None) -> SpsaTrace:
    """Run SPSA from ``theta0``.

    ``probe`` feeds the gradient estimates; ``clean`` is called once per
    iteration on the new iterate and is what the trace records.
    """
    theta = np.clip(np.asarray(theta0, dtype=float), 0.0, 1.0)
    c0 = cfg.c0 if c0 is None else c0
    n = theta.shape[0]
    calls = [0]

    def counted(x):
        calls[0] += 1
        return probe(x)

    if cfg.a is None:
        a = calibrate_a(counted, theta, cfg, rng, c0)
    else:
        a = cfg.a
    n_cal = calls[0]
    jm = cfg.j_max
    thetas = np.empty((jm, n))
    f = np.empty(jm)
    ar = np.empty(jm)
    mis = np.empty(jm)
    ga = np.empty(jm)
    gc = np.empty(jm)
    signs = np.empty((jm, n), dtype=np.int8)
    x = theta
    for j in range(1, jm + 1):
        x, ga[j - 1], gc[j - 1], signs[j - 1] = spsa_step(counted, x, j, a, cfg, rng, c0)
        try:
            res = clean(x)
        except Exception as exc:
            raise ObjectiveError(j, exc) from exc
        calls[0] += 1
        thetas[j - 1] = x
        f[j - 1], ar[j - 1], mis[j - 1] = res.f_value, res.ar, res.misassignment
    return SpsaTrace(theta.copy(), a, c0, thetas, f, ar, mis, ga, gc, signs,
                     n_evals=calls[0] - n_cal, n_calibration_evals=n_cal)


def optimize(spec: SchemeSpec, diag: CostDiagonal, cfg: SpsaConfig,
             rng: np.random.Generator | None = None) -> SpsaTrace:
    """Train ``spec`` on ``diag`` from a uniform random start drawn from the rng."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    theta0 = rng.uniform(0.0, 1.0, size=n_theta(spec))
    trace = minimize(
        lambda t: simulator.cost_value(spec, t, diag),
        lambda t: simulator.evaluate(spec, t, diag),
        theta0, cfg, rng, c0=rescaled_c0(cfg, spec),
    )
    trace.meta = {"scheme": spec.to_dict()}
    return trace
