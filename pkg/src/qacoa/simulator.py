"""Dense state-vector simulation of the alternating cost/mixer ansatz.

Layer m applies ``exp(-i 2 pi f_m H_C)`` and then ``exp(-i pi g_m H_M)``
with ``H_M = sum_i X_i``, starting from ``|+>^N``. Angles outside [0, 1] are
accepted: both unitaries are periodic in their normalized angle (the mixer
up to a global phase), so nothing about F changes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import hadamard

from . import schemes
from .sat import MAX_QUBITS, CostDiagonal, ResourceError
from .schemes import SchemeSpec

TWO_PI = 2.0 * np.pi
# up to this size the mixer is applied as two dense Walsh-Hadamard products
DENSE_MIXER_MAX = 8


@dataclass(frozen=True)
class EvalResult:
    f_value: float
    ar: float
    misassignment: float
    state: np.ndarray | None = None


def initial_state(n_vars: int, max_qubits: int = MAX_QUBITS) -> np.ndarray:
    if n_vars < 1:
        raise ValueError("need at least one qubit")
    if n_vars > max_qubits:
        raise ResourceError(f"n_vars={n_vars} exceeds the limit of {max_qubits}")
    dim = 1 << n_vars
    return np.full(dim, 1.0 / np.sqrt(dim), dtype=complex)


def _n_qubits(state: np.ndarray) -> int:
    n = state.shape[0].bit_length() - 1
    if state.ndim != 1 or (1 << n) != state.shape[0]:
        raise ValueError(f"state length {state.shape} is not a power of two")
    return n


def _cost_inplace(state: np.ndarray, energies: np.ndarray, f: float) -> None:
    state *= np.exp(-1j * TWO_PI * f * energies)


@lru_cache(maxsize=None)
def _walsh(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalized H^{(x)n} and the eigenvalues of H_M in that basis."""
    w = hadamard(1 << n) / np.sqrt(1 << n)
    popcount = np.array([bin(x).count("1") for x in range(1 << n)])
    return w, (n - 2 * popcount).astype(float)


def _mixer_inplace(state: np.ndarray, g: float, n: int) -> None:
    if n <= DENSE_MIXER_MAX:
        w, eig = _walsh(n)
        state[:] = w @ (np.exp(-1j * np.pi * g * eig) * (w @ state))
        return
    cos, isin = np.cos(np.pi * g), 1j * np.sin(np.pi * g)
    for i in range(n):
        v = state.reshape(-1, 2, 1 << i)
        a0 = v[:, 0, :].copy()
        v[:, 0, :] *= cos
        v[:, 0, :] -= isin * v[:, 1, :]
        v[:, 1, :] *= cos
        v[:, 1, :] -= isin * a0


def _xsum(state: np.ndarray, n: int) -> np.ndarray:
    """``H_M |state>``."""
    if n <= DENSE_MIXER_MAX:
        w, eig = _walsh(n)
        return w @ (eig * (w @ state))
    out = np.zeros_like(state)
    for i in range(n):
        out.reshape(-1, 2, 1 << i)[...] += state.reshape(-1, 2, 1 << i)[:, ::-1, :]
    return out


def apply_cost(state: np.ndarray, diag: CostDiagonal, f: float) -> np.ndarray:
    if state.shape != diag.energies.shape:
        raise ValueError(f"state length {state.shape[0]} does not match H_C dimension {diag.dim}")
    out = np.array(state, dtype=complex)
    _cost_inplace(out, diag.energies, f)
    return out


def apply_mixer(state: np.ndarray, g: float) -> np.ndarray:
    out = np.array(state, dtype=complex)
    _mixer_inplace(out, g, _n_qubits(out))
    return out


def run_layers(layer_angles: np.ndarray, diag: CostDiagonal) -> np.ndarray:
    """State after the given (p, 2) array of normalized (f, g) pairs."""
    n = diag.n_vars
    psi = initial_state(n)
    for f, g in layer_angles:
        _cost_inplace(psi, diag.energies, f)
        _mixer_inplace(psi, g, n)
    return psi


def expectation(state: np.ndarray, diag: CostDiagonal) -> float:
    return float(np.dot(np.abs(state) ** 2, diag.energies))


def approximation_ratio(f_value: float, diag: CostDiagonal) -> float:
    """``(c_max - F) / (c_max - c_min)``; 1.0 when every assignment is optimal."""
    if diag.c_max == diag.c_min:
        return 1.0
    return (diag.c_max - f_value) / (diag.c_max - diag.c_min)


def misassignment_rate(state: np.ndarray, diag: CostDiagonal) -> float:
    """Expected Hamming distance to the nearest optimal assignment, over N."""
    probs = np.abs(state) ** 2
    return float(np.dot(probs, diag.solution_distances)) / diag.n_vars


def misassignment_rate_by_shell(state: np.ndarray, diag: CostDiagonal) -> float:
    """Same quantity summed shell by shell: sum_d d * P(distance = d)."""
    probs = np.abs(state) ** 2
    shells = np.bincount(diag.solution_distances, weights=probs, minlength=diag.n_vars + 1)
    return float(np.dot(np.arange(shells.shape[0]), shells)) / diag.n_vars


def evaluate_angles(layer_angles: np.ndarray, diag: CostDiagonal, keep_state: bool = False) -> EvalResult:
    psi = run_layers(layer_angles, diag)
    f = expectation(psi, diag)
    return EvalResult(
        f_value=f,
        ar=approximation_ratio(f, diag),
        misassignment=misassignment_rate(psi, diag),
        state=psi if keep_state else None,
    )


def evaluate(spec: SchemeSpec, theta, diag: CostDiagonal, keep_state: bool = False) -> EvalResult:
    return evaluate_angles(schemes.angles(spec, theta), diag, keep_state)


def cost_value(spec: SchemeSpec, theta, diag: CostDiagonal) -> float:
    """F only; skips the misassignment bookkeeping."""
    return expectation(run_layers(schemes.angles(spec, theta), diag), diag)


def layer_gradient_from_angles(layer_angles: np.ndarray, diag: CostDiagonal) -> np.ndarray:
    """Exact ``(dF/df_m, dF/dg_m)`` for every layer by a reverse sweep.

    The backward pass walks the circuit in reverse, undoing each unitary on
    both the state and the adjoint ``H_C |psi>``; only two state vectors are
    ever held. For ``U = exp(-i a G)``: ``dF/da = 2 Im <lam| G |phi>``.
    """
    n = diag.n_vars
    energies = diag.energies
    phi = run_layers(layer_angles, diag)
    lam = energies * phi
    p = layer_angles.shape[0]
    grad = np.empty((p, 2))
    for m in range(p - 1, -1, -1):
        f, g = layer_angles[m]
        grad[m, 1] = 2.0 * np.pi * np.vdot(lam, _xsum(phi, n)).imag
        _mixer_inplace(phi, -g, n)
        _mixer_inplace(lam, -g, n)
        grad[m, 0] = 2.0 * TWO_PI * np.vdot(lam, energies * phi).imag
        _cost_inplace(phi, energies, -f)
        _cost_inplace(lam, energies, -f)
    return grad


def layer_angle_gradient(spec: SchemeSpec, theta, diag: CostDiagonal) -> np.ndarray:
    return layer_gradient_from_angles(schemes.angles(spec, theta), diag)


def theta_gradient(spec: SchemeSpec, theta, diag: CostDiagonal) -> np.ndarray:
    """``dF/dtheta`` by chaining layer gradients through the angle Jacobian."""
    grad = layer_angle_gradient(spec, theta, diag)
    jac = schemes.angle_jacobian(spec, theta)
    return np.einsum("ma,maj->j", grad, jac)


@dataclass(frozen=True)
class LandscapeScan:
    values: np.ndarray  # values[i, j] = F(theta_1 = axis[i], theta_2 = axis[j])
    axis: np.ndarray
    spec: SchemeSpec
    c_min: int
    c_max: int

    def rows(self):
        for i, t1 in enumerate(self.axis):
            for j, t2 in enumerate(self.axis):
                yield float(t1), float(t2), float(self.values[i, j])


def landscape_scan(spec: SchemeSpec, diag: CostDiagonal, grid: int) -> LandscapeScan:
    """F on a uniform ``grid x grid`` lattice over the unit square (endpoints included)."""
    if grid < 2:
        raise ValueError("grid must be >= 2")
    if schemes.n_theta(spec) != 2:
        raise ValueError(f"{spec.label} at p={spec.p} is not a two-parameter scheme")
    axis = np.linspace(0.0, 1.0, grid)
    values = np.empty((grid, grid))
    for i, t1 in enumerate(axis):
        for j, t2 in enumerate(axis):
            values[i, j] = cost_value(spec, np.array([t1, t2]), diag)
    return LandscapeScan(values, axis, spec, diag.c_min, diag.c_max)
