import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qacoa import sat
from qacoa.sat import Clause, SatInstance

from . import oracles


def lits(inst):
    return [c.to_dimacs() for c in inst.clauses]


@pytest.mark.parametrize("n, k, alpha, m", [(8, 3, 4.125, 33), (5, 3, 4.2, 21), (3, 3, 1 / 3, 1), (8, 2, 1.125, 9)])
def test_clause_count(n, k, alpha, m):
    inst = sat.generate_random_instance(n, k, alpha, seed=1)
    assert inst.m == m
    assert all(c.k == k and len(set(c.vars)) == k for c in inst.clauses)


def test_single_clause_forced_when_k_equals_n():
    inst = sat.generate_random_instance(3, 3, 1 / 3, seed=5)
    assert sorted(inst.clauses[0].vars) == [0, 1, 2]


def test_rounding_half_away_from_zero():
    assert sat.n_clauses_for(2, 1.25) == 3  # 2.5 -> 3
    assert sat.n_clauses_for(4, 0.125) == 1  # 0.5 -> 1
    assert sat.n_clauses_for(5, 4.2) == 21


def test_generation_reproducible():
    a = sat.generate_random_instance(7, 3, 4.2, seed=11)
    b = sat.generate_random_instance(7, 3, 4.2, seed=11)
    assert sat.format_dimacs(a) == sat.format_dimacs(b)
    assert a.content_hash() == b.content_hash()
    assert a != sat.generate_random_instance(7, 3, 4.2, seed=12)


def test_generation_rejects_bad_args():
    with pytest.raises(ValueError):
        sat.generate_random_instance(2, 3, 1.0, 0)
    with pytest.raises(ValueError):
        sat.generate_random_instance(4, 2, 0.0, 0)


# (x1 or not x2) on the 4-row truth table
@pytest.mark.parametrize("x1, x2, violated", [(0, 0, False), (0, 1, True), (1, 0, False), (1, 1, False)])
def test_clause_violated_truth_table(x1, x2, violated):
    clause = Clause((0, 1), (1, -1))
    assert sat.clause_violated(clause, [x1, x2]) is violated
    assert bool(oracles.violations([[1, -2]], [x1, x2])) is violated


def test_unit_clause_satisfied():
    assert sat.clause_violated(Clause((0,), (1,)), [1]) is False


def test_single_clause_energies_little_endian():
    inst = SatInstance(2, 2, (Clause((0, 1), (1, 1)),))
    diag = sat.build_cost_diagonal(inst)
    assert diag.energies.tolist() == [1, 0, 0, 0]
    assert diag.c_min == 0 and diag.c_max == 1
    assert diag.solutions.tolist() == [1, 2, 3]


def test_duplicate_clauses_scale_energies():
    c = Clause((0, 2), (1, -1))
    one = sat.build_cost_diagonal(SatInstance(3, 2, (c,)))
    five = sat.build_cost_diagonal(SatInstance(3, 2, (c,) * 5))
    np.testing.assert_array_equal(five.energies, 5 * one.energies)


def test_unit_clause_half_the_bitstrings():
    for i in range(4):
        diag = sat.build_cost_diagonal(SatInstance(4, 1, (Clause((i,), (-1,)),)))
        assert diag.energies.sum() == 8
        bits = (np.arange(16) >> i) & 1
        np.testing.assert_array_equal(diag.energies, bits)


def test_satisfiable_solutions_are_satisfying_assignments():
    inst = sat.generate_random_instance(6, 3, 2.0, seed=3)
    diag = sat.build_cost_diagonal(inst)
    assert diag.c_min == 0
    want = [x for x in range(64) if oracles.violations(lits(inst), sat.bits_of(x, 6)) == 0]
    assert diag.solutions.tolist() == want


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 8), k=st.integers(1, 3), m=st.integers(1, 20), seed=st.integers(0, 2**32 - 1))
def test_energies_match_oracle(n, k, m, seed):
    k = min(k, n)
    inst = sat.generate_random_instance(n, k, m / n, seed)
    diag = sat.build_cost_diagonal(inst)
    np.testing.assert_array_equal(diag.energies, oracles.energies(lits(inst), n))


def test_energies_invariant_under_clause_order():
    inst = sat.generate_random_instance(6, 3, 4.0, seed=8)
    rev = SatInstance(inst.n_vars, inst.k, tuple(reversed(inst.clauses)))
    np.testing.assert_array_equal(sat.build_cost_diagonal(inst).energies, sat.build_cost_diagonal(rev).energies)


def test_solution_distances_match_bruteforce():
    inst = sat.generate_random_instance(7, 3, 4.3, seed=2)
    diag = sat.build_cost_diagonal(inst)
    np.testing.assert_array_equal(diag.solution_distances, oracles.hamming_min(7, diag.solutions.tolist()))


def test_resource_limit():
    inst = sat.generate_random_instance(6, 2, 1.0, 0)
    with pytest.raises(sat.ResourceError):
        sat.build_cost_diagonal(inst, max_qubits=5)


def test_parse_minimal():
    inst = sat.parse_dimacs("c comment\np cnf 2 1\n1 -2 0\n")
    assert inst.n_vars == 2 and inst.m == 1
    assert inst.clauses[0] == Clause((0, 1), (1, -1))


def test_roundtrip(tmp_path):
    inst = sat.generate_random_instance(8, 3, 4.125, seed=4)
    path = tmp_path / "x.cnf"
    sat.write_dimacs(inst, path)
    assert sat.read_dimacs(path) == inst
    assert SatInstance.from_dict(inst.to_dict()) == inst


@pytest.mark.parametrize("text, msg", [
    ("p cnf 2 1\n1 -2\n", "not terminated"),
    ("1 2 0\n", "before 'p cnf'"),
    ("p cnf 2 1\n1 3 0\n", "out of range"),
    ("p cnf 2 2\n1 2 0\n", "declares 2"),
    ("p cnf 3 2\n1 2 0\n1 2 3 0\n", "mixed clause widths"),
    ("p cnf 2 1\n1 x 0\n", "non-integer"),
    ("p cnf 2 1\n1 1 0\n", "distinct"),
    ("", "missing"),
])
def test_parse_errors(text, msg):
    with pytest.raises(sat.DimacsError, match=msg):
        sat.parse_dimacs(text)


def test_parse_error_reports_line_number():
    with pytest.raises(sat.DimacsError, match="line 3"):
        sat.parse_dimacs("c x\np cnf 2 1\n1 -2\n")
