"""Random MAX K-SAT instances, DIMACS I/O and the diagonal cost Hamiltonian.

Conventions shared by the whole package:

* Variables are 0-based. Bit ``i`` of a basis-state index is the value of
  variable ``i`` (little-endian), so index ``0b10`` means ``x0=0, x1=1``.
* The cost Hamiltonian is the number of violated clauses. It is minimized;
  the approximation ratio ``(c_max - F) / (c_max - c_min)`` turns this into
  a score in ``[0, 1]`` where 1 is optimal. This is equivalent to maximizing
  ``-H_C``.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

MAX_QUBITS = 24


class DimacsError(ValueError):
    """Malformed DIMACS input."""


class ResourceError(RuntimeError):
    """Problem too large for dense state-vector treatment."""


@dataclass(frozen=True)
class Clause:
    vars: tuple[int, ...]
    signs: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "vars", tuple(int(v) for v in self.vars))
        object.__setattr__(self, "signs", tuple(int(s) for s in self.signs))
        if len(self.vars) != len(self.signs):
            raise ValueError("vars and signs must have the same length")
        if len(set(self.vars)) != len(self.vars):
            raise ValueError(f"clause variables must be distinct: {self.vars}")
        if any(s not in (1, -1) for s in self.signs):
            raise ValueError(f"signs must be +1 or -1: {self.signs}")
        if any(v < 0 for v in self.vars):
            raise ValueError("variable indices must be non-negative")

    @property
    def k(self) -> int:
        return len(self.vars)

    def to_dimacs(self) -> list[int]:
        return [s * (v + 1) for v, s in zip(self.vars, self.signs)]


@dataclass(frozen=True)
class SatInstance:
    n_vars: int
    k: int
    clauses: tuple[Clause, ...]

    def __post_init__(self):
        object.__setattr__(self, "clauses", tuple(self.clauses))
        if not self.clauses:
            raise ValueError("an instance needs at least one clause")
        for c in self.clauses:
            if c.k != self.k:
                raise ValueError(f"clause width {c.k} differs from k={self.k}")
            if max(c.vars) >= self.n_vars:
                raise ValueError(f"clause {c.vars} references a variable >= n_vars")

    @property
    def m(self) -> int:
        return len(self.clauses)

    @property
    def alpha(self) -> Fraction:
        return Fraction(self.m, self.n_vars)

    def to_dict(self) -> dict:
        return {
            "n_vars": self.n_vars,
            "k": self.k,
            "clauses": [c.to_dimacs() for c in self.clauses],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SatInstance":
        clauses = [_clause_from_literals(lits) for lits in d["clauses"]]
        return cls(int(d["n_vars"]), int(d["k"]), tuple(clauses))

    def content_hash(self) -> str:
        """Stable short hash of the canonical JSON form."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class CostDiagonal:
    """Eigenvalues of H_C plus the quantities every evaluation needs."""

    energies: np.ndarray
    c_min: int
    c_max: int
    solutions: np.ndarray
    n_vars: int
    _distances: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.energies.shape[0]

    @property
    def solution_distances(self) -> np.ndarray:
        """Minimum Hamming distance from every bitstring to the solution set."""
        if self._distances is None:
            object.__setattr__(
                self, "_distances", hamming_distance_to_set(self.solutions, self.n_vars)
            )
        return self._distances


def _clause_from_literals(lits: Sequence[int]) -> Clause:
    if any(l == 0 for l in lits):
        raise ValueError("literal 0 is not allowed inside a clause")
    return Clause(tuple(abs(l) - 1 for l in lits), tuple(1 if l > 0 else -1 for l in lits))


def n_clauses_for(n_vars: int, alpha) -> int:
    """``round(alpha * n_vars)`` with halves rounded away from zero."""
    # floats go through repr so 4.2 means 21/5, not its binary expansion
    x = (Fraction(repr(alpha)) if isinstance(alpha, float) else Fraction(alpha)) * n_vars
    floor = math.floor(x)
    return floor + 1 if x - floor >= Fraction(1, 2) else floor


def generate_random_instance(n_vars: int, k: int, alpha, seed: int) -> SatInstance:
    """Sample from the uniform random K-SAT ensemble.

    Each of the ``M = round(alpha * n_vars)`` clauses picks ``k`` distinct
    variables uniformly and fair independent signs. Duplicate clauses are
    allowed.
    """
    if k < 1 or n_vars < 1:
        raise ValueError("n_vars and k must be positive")
    if k > n_vars:
        raise ValueError(f"clause width k={k} exceeds n_vars={n_vars}")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    m = n_clauses_for(n_vars, alpha)
    if m < 1:
        raise ValueError(f"alpha={alpha} gives no clauses for n_vars={n_vars}")
    rng = np.random.default_rng(seed)
    clauses = []
    for _ in range(m):
        vs = rng.choice(n_vars, size=k, replace=False)
        ss = rng.integers(0, 2, size=k) * 2 - 1
        clauses.append(Clause(tuple(int(v) for v in vs), tuple(int(s) for s in ss)))
    return SatInstance(n_vars, k, tuple(clauses))


def clause_violated(clause: Clause, assignment: Sequence[int]) -> bool:
    """A clause is violated iff every literal is false."""
    for v, s in zip(clause.vars, clause.signs):
        bit = int(assignment[v])
        if (s == 1 and bit == 1) or (s == -1 and bit == 0):
            return False
    return True


def bits_of(index: int, n_vars: int) -> list[int]:
    return [(index >> i) & 1 for i in range(n_vars)]


def build_cost_diagonal(inst: SatInstance, max_qubits: int = MAX_QUBITS) -> CostDiagonal:
    n = inst.n_vars
    if n > max_qubits:
        raise ResourceError(f"n_vars={n} exceeds the limit of {max_qubits}")
    idx = np.arange(1 << n, dtype=np.int64)
    energies = np.zeros(1 << n, dtype=np.int64)
    for c in inst.clauses:
        violated = np.ones(1 << n, dtype=bool)
        for v, s in zip(c.vars, c.signs):
            bit = (idx >> v) & 1
            # a positive literal is false at bit 0, a negated one at bit 1
            violated &= bit == (0 if s == 1 else 1)
        energies += violated
    c_min = int(energies.min())
    c_max = int(energies.max())
    solutions = np.flatnonzero(energies == c_min)
    energies.setflags(write=False)
    solutions.setflags(write=False)
    return CostDiagonal(energies, c_min, c_max, solutions, n)


def hamming_distance_to_set(sources: Iterable[int], n_vars: int) -> np.ndarray:
    """Multi-source BFS on the N-cube; distance to the nearest source."""
    size = 1 << n_vars
    dist = np.full(size, -1, dtype=np.int64)
    frontier = np.unique(np.asarray(list(sources), dtype=np.int64))
    if frontier.size == 0:
        raise ValueError("empty source set")
    dist[frontier] = 0
    d = 0
    while frontier.size:
        d += 1
        nbrs = np.concatenate([frontier ^ (1 << i) for i in range(n_vars)])
        nbrs = np.unique(nbrs)
        nbrs = nbrs[dist[nbrs] < 0]
        dist[nbrs] = d
        frontier = nbrs
    return dist


def read_dimacs(path: str | os.PathLike) -> SatInstance:
    with open(path) as fh:
        return parse_dimacs(fh.read())


def parse_dimacs(text: str) -> SatInstance:
    """Parse DIMACS CNF text. All clauses must share one width."""
    n_vars = n_clauses = None
    clauses: list[Clause] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise DimacsError(f"line {lineno}: bad header {line!r}")
            try:
                n_vars, n_clauses = int(parts[2]), int(parts[3])
            except ValueError:
                raise DimacsError(f"line {lineno}: bad header {line!r}") from None
            continue
        if n_vars is None:
            raise DimacsError(f"line {lineno}: clause before 'p cnf' header")
        try:
            lits = [int(tok) for tok in line.split()]
        except ValueError:
            raise DimacsError(f"line {lineno}: non-integer literal in {line!r}") from None
        if not lits or lits[-1] != 0:
            raise DimacsError(f"line {lineno}: clause not terminated by 0")
        lits = lits[:-1]
        if not lits or 0 in lits:
            raise DimacsError(f"line {lineno}: malformed clause {line!r}")
        if any(abs(l) > n_vars for l in lits):
            raise DimacsError(f"line {lineno}: literal out of range 1..{n_vars}")
        try:
            clauses.append(_clause_from_literals(lits))
        except ValueError as exc:
            raise DimacsError(f"line {lineno}: {exc}") from None
    if n_vars is None:
        raise DimacsError("missing 'p cnf' header")
    if len(clauses) != n_clauses:
        raise DimacsError(f"header declares {n_clauses} clauses, found {len(clauses)}")
    widths = {c.k for c in clauses}
    if len(widths) > 1:
        raise DimacsError(f"mixed clause widths {sorted(widths)}")
    return SatInstance(n_vars, widths.pop(), tuple(clauses))


def format_dimacs(inst: SatInstance) -> str:
    lines = [f"p cnf {inst.n_vars} {inst.m}"]
    lines += [" ".join(str(l) for l in c.to_dimacs()) + " 0" for c in inst.clauses]
    return "\n".join(lines) + "\n"


def write_dimacs(inst: SatInstance, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        fh.write(format_dimacs(inst))
