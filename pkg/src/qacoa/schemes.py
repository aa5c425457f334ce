"""Maps from a free parameter vector theta to per-layer angles (f_m, g_m).

Every scheme here is a special case of one rule: layer m reads a pair of
source entries of theta and pushes both through ``n_m`` applications of
the r=4 logistic map.

=============== ======================== ===============================
scheme          sources for layer m      iterations n_m
=============== ======================== ===============================
standard        (gamma_m, beta_m)        0
pure            (theta_1, theta_2)       c (m - 1)
delayed(p_t)    layer min(m, p_t)        c (max(m, p_t) - p_t)
iterated(T)     block floor((m-1)/T)     c ((m - 1) mod T)
=============== ======================== ===============================

Angles are normalized to [0, 1]; the simulator supplies the 2*pi (cost) and
pi (mixer) factors.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterator

import numpy as np

from .chaos import R_CHAOTIC

KINDS = ("standard", "pure", "delayed", "iterated")


@dataclass(frozen=True)
class SchemeSpec:
    kind: str
    p: int
    c: int = 1
    p_t: int = 1
    T: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scheme kind {self.kind!r}; expected one of {KINDS}")
        if self.p < 1:
            raise ValueError("depth p must be >= 1")
        if self.c < 1 or self.p_t < 1 or self.T < 1:
            raise ValueError("c, p_t and T must be >= 1")

    @classmethod
    def standard(cls, p: int) -> "SchemeSpec":
        return cls("standard", p)

    @classmethod
    def pure(cls, p: int, c: int) -> "SchemeSpec":
        return cls("pure", p, c=c)

    @classmethod
    def delayed(cls, p: int, c: int, p_t: int) -> "SchemeSpec":
        return cls("delayed", p, c=c, p_t=p_t)

    @classmethod
    def iterated(cls, p: int, c: int, T: int) -> "SchemeSpec":
        return cls("iterated", p, c=c, T=T)

    def with_depth(self, p: int) -> "SchemeSpec":
        return SchemeSpec(self.kind, p, self.c, self.p_t, self.T)

    @property
    def label(self) -> str:
        if self.kind == "standard":
            return "standard"
        if self.kind == "pure":
            return f"pure(c={self.c})"
        if self.kind == "delayed":
            return f"delayed(c={self.c},p_t={self.p_t})"
        return f"iterated(c={self.c},T={self.T})"

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.kind == "standard":
            d.update(c=1)
        if self.kind != "delayed":
            d.pop("p_t")
        if self.kind != "iterated":
            d.pop("T")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SchemeSpec":
        return cls(d["kind"], int(d["p"]), int(d.get("c", 1)), int(d.get("p_t", 1)), int(d.get("T", 1)))


def n_theta(spec: SchemeSpec) -> int:
    if spec.kind == "standard":
        return 2 * spec.p
    if spec.kind == "pure":
        return 2
    if spec.kind == "delayed":
        return 2 * min(spec.p_t, spec.p)
    return 2 * ((spec.p - 1) // spec.T + 1)


def layer_sources(spec: SchemeSpec) -> Iterator[tuple[int, int]]:
    """Yield ``(block, n_iterations)`` for m = 1..p; theta[2*block : 2*block+2] feeds the layer."""
    c = spec.c
    for m in range(1, spec.p + 1):
        if spec.kind == "standard":
            yield m - 1, 0
        elif spec.kind == "pure":
            yield 0, c * (m - 1)
        elif spec.kind == "delayed":
            yield min(m, spec.p_t) - 1, c * (max(m, spec.p_t) - spec.p_t)
        else:
            yield (m - 1) // spec.T, c * ((m - 1) % spec.T)


def _check_theta(spec: SchemeSpec, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.shape[0] != n_theta(spec):
        raise ValueError(
            f"{spec.label} at p={spec.p} expects {n_theta(spec)} parameters, got shape {theta.shape}"
        )
    if np.any(~((theta >= 0.0) & (theta <= 1.0))):
        raise ValueError("theta entries must lie in [0, 1]")
    return theta


def _orbits(theta: np.ndarray, spec: SchemeSpec, with_derivative: bool):
    """Per-component orbit samples keyed by iteration count, in plain floats."""
    need: dict[int, set[int]] = {}
    for block, n in layer_sources(spec):
        need.setdefault(block, set()).add(n)
    values: dict[tuple[int, int], float] = {}
    derivs: dict[tuple[int, int], float] = {}
    r = R_CHAOTIC
    for block, counts in need.items():
        targets = sorted(counts)
        for comp in (2 * block, 2 * block + 1):
            x = float(theta[comp])
            h = 1.0
            k = 0
            for target in targets:
                if with_derivative:
                    for _ in range(target - k):
                        h *= r * (1.0 - 2.0 * x)
                        x = r * x * (1.0 - x)
                else:
                    for _ in range(target - k):
                        x = r * x * (1.0 - x)
                k = target
                values[comp, k] = x
                derivs[comp, k] = h
    return values, derivs


def angles(spec: SchemeSpec, theta) -> np.ndarray:
    """Normalized layer angles, shape (p, 2) with columns (f_m, g_m)."""
    theta = _check_theta(spec, theta)
    values, _ = _orbits(theta, spec, with_derivative=False)
    out = np.empty((spec.p, 2))
    for m, (block, n) in enumerate(layer_sources(spec)):
        out[m, 0] = values[2 * block, n]
        out[m, 1] = values[2 * block + 1, n]
    return out


def angle_jacobian(spec: SchemeSpec, theta) -> np.ndarray:
    """``d(f_m, g_m)/d theta_j`` as an array of shape (p, 2, n_theta).

    Each angle depends on exactly one component of theta, so the Jacobian has
    one nonzero per (m, angle) row: the iterated-map derivative h.
    """
    theta = _check_theta(spec, theta)
    _, derivs = _orbits(theta, spec, with_derivative=True)
    jac = np.zeros((spec.p, 2, theta.shape[0]))
    with np.errstate(over="ignore"):
        for m, (block, n) in enumerate(layer_sources(spec)):
            for a in (0, 1):
                jac[m, a, 2 * block + a] = derivs[2 * block + a, n]
    return jac


def schedule_rows(spec: SchemeSpec, theta):
    """CSV-ready rows ``(m, f_m, g_m)``."""
    for m, (f, g) in enumerate(angles(spec, theta), start=1):
        yield m, float(f), float(g)
