import math

import numpy as np
import pytest

from qacoa import sat, simulator as sim, spsa
from qacoa.sat import Clause, SatInstance
from qacoa.schemes import SchemeSpec
from qacoa.spsa import SpsaConfig


def bowl(theta):
    return float(np.sum((np.asarray(theta) - 0.5) ** 2))


def clean_of(f):
    return lambda t: sim.EvalResult(f(t), 0.0, 0.0)


def test_config_validation():
    with pytest.raises(ValueError):
        SpsaConfig(j_max=0)
    with pytest.raises(ValueError):
        SpsaConfig(alpha_gain=0.1, gamma_gain=0.2)
    with pytest.raises(ValueError):
        SpsaConfig(c0=0)
    assert SpsaConfig(j_max=1000).stability == 10
    assert SpsaConfig(j_max=1000, A=3).stability == 3


def test_gains_decreasing_and_summable():
    cfg = SpsaConfig(j_max=1000)
    j = np.arange(1, 1_000_001, dtype=float)
    a = 1.0 / (cfg.stability + j) ** cfg.alpha_gain
    c = cfg.c0 / j**cfg.gamma_gain
    assert np.all(np.diff(a) < 0) and np.all(np.diff(c) < 0)
    assert cfg.gain_a(1.0, 1) == a[0] and cfg.gain_c(5) == c[4]
    # sum a_j diverges (alpha <= 1); sum (a_j / c_j)^2 converges: its terms decay faster than 1/j
    assert cfg.alpha_gain <= 1
    tail = (a / c) ** 2
    slope = np.polyfit(np.log(j[100_000:]), np.log(tail[100_000:]), 1)[0]
    assert slope < -1
    assert np.sum(a) > 100 * a[0]


def test_first_gain_uses_zero_offset():
    # a_k = a / (A + k + 1)^alpha with k = j - 1
    cfg = SpsaConfig(j_max=100)
    assert cfg.gain_a(2.0, 1) == 2.0 / (cfg.stability + 1) ** cfg.alpha_gain


def test_calibration_single_component():
    cfg = SpsaConfig(j_max=200)
    assert math.isclose(spsa.a_from_gradient(np.array([4.0]), cfg), 0.01 * 3**0.602 / 4.0)


def test_calibration_geometric_mean():
    cfg = SpsaConfig(j_max=200)
    assert math.isclose(spsa.a_from_gradient(np.array([10.0, -0.1]), cfg), 0.01 * 3**0.602)
    assert math.isclose(spsa.a_from_gradient(np.array([10.0, 0.0, 0.1]), cfg), 0.01 * 3**0.602)


def test_calibration_all_zero():
    with pytest.raises(spsa.CalibrationError):
        spsa.a_from_gradient(np.zeros(3), SpsaConfig())
    with pytest.raises(spsa.CalibrationError):
        spsa.calibrate_a(lambda t: 1.0, np.full(2, 0.5), SpsaConfig(), np.random.default_rng(0))


@pytest.mark.parametrize("seed", range(10))
def test_quadratic_bowl(seed):
    # fixed gain: the calibrated default only targets a 0.01 first step
    rng = np.random.default_rng(seed)
    theta0 = rng.uniform(0, 1, 4)
    tr = spsa.minimize(bowl, clean_of(bowl), theta0, SpsaConfig(j_max=500, a=0.5), rng)
    assert np.max(np.abs(tr.final_theta - 0.5)) < 1e-2


def test_constant_objective_leaves_theta():
    theta0 = np.array([0.2, 0.9, 0.4])
    cfg = SpsaConfig(j_max=20, a=1.0)
    tr = spsa.minimize(lambda t: 3.0, clean_of(lambda t: 3.0), theta0, cfg, np.random.default_rng(0))
    np.testing.assert_array_equal(tr.thetas, np.tile(theta0, (20, 1)))


def test_box_feasibility_and_budget():
    seen = []

    def f(t):
        seen.append(np.array(t))
        return float(np.sum(t))  # pushes theta to the lower face

    cfg = SpsaConfig(j_max=50, c0=0.3)
    tr = spsa.minimize(f, clean_of(f), np.full(3, 0.05), cfg, np.random.default_rng(1))
    pts = np.array(seen)
    assert np.all((pts >= 0) & (pts <= 1))
    assert len(seen) == 3 * 50 + 2
    assert tr.n_evals == 150 and tr.n_calibration_evals == 2


def test_step_single_update():
    cfg = SpsaConfig(j_max=10, a=0.5)
    rng = np.random.default_rng(3)
    th = np.array([0.3, 0.6])
    nxt, aj, cj, s = spsa.spsa_step(bowl, th, 1, 0.5, cfg, rng)
    plus, minus = np.clip(th + cj * s, 0, 1), np.clip(th - cj * s, 0, 1)
    g = (bowl(plus) - bowl(minus)) / (2 * cj * s)
    np.testing.assert_array_equal(nxt, np.clip(th - aj * g, 0, 1))


def test_objective_error_carries_iteration():
    calls = [0]

    def f(t):
        calls[0] += 1
        if calls[0] > 7:
            raise FloatingPointError("boom")
        return 1.0 + t[0]

    with pytest.raises(spsa.ObjectiveError) as info:
        spsa.minimize(f, clean_of(lambda t: 0.0), [0.5], SpsaConfig(j_max=10, a=0.1), np.random.default_rng(0))
    assert info.value.iteration == 4


def small_diag():
    return sat.build_cost_diagonal(sat.generate_random_instance(4, 3, 3.0, 2))


def test_optimize_deterministic():
    d = small_diag()
    spec = SchemeSpec.pure(3, 5)
    a = spsa.optimize(spec, d, SpsaConfig(j_max=40, seed=9))
    b = spsa.optimize(spec, d, SpsaConfig(j_max=40, seed=9))
    assert a.to_dict() == b.to_dict()
    assert a.n_evals == 120 and len(a) == 40


def test_optimize_records_clean_values():
    d = small_diag()
    spec = SchemeSpec.standard(2)
    tr = spsa.optimize(spec, d, SpsaConfig(j_max=15, seed=1))
    for j in (1, 7, 15):
        res = sim.evaluate(spec, tr.thetas[j - 1], d)
        assert tr.f[j - 1] == res.f_value and tr.ar[j - 1] == res.ar
    assert tr.best_f == tr.f.min()
    assert np.array_equal(tr.best_theta, tr.thetas[np.argmin(tr.f)])


def test_at_reports_best_so_far():
    d = small_diag()
    tr = spsa.optimize(SchemeSpec.standard(2), d, SpsaConfig(j_max=30, seed=2))
    for j in (1, 10, 30):
        row = tr.at(j)
        assert row["f"] == tr.f[:j].min()
        assert row["last_f"] == tr.f[j - 1]
        assert row["ar"] >= row["last_ar"]


def test_j_max_one():
    tr = spsa.optimize(SchemeSpec.pure(2, 1), small_diag(), SpsaConfig(j_max=1, seed=0))
    assert len(tr) == 1 and tr.thetas.shape == (1, 2)
    assert not np.array_equal(tr.thetas[0], tr.theta0)


def test_standard_and_pure_coincide_at_p1():
    d = small_diag()
    a = spsa.optimize(SchemeSpec.standard(1), d, SpsaConfig(j_max=50, seed=4))
    b = spsa.optimize(SchemeSpec.pure(1, 100), d, SpsaConfig(j_max=50, seed=4))
    for key in ("thetas", "f", "ar", "signs", "gain_a"):
        assert np.array_equal(getattr(a, key), getattr(b, key))


def test_pure_p1_single_clause():
    d = sat.build_cost_diagonal(SatInstance(3, 3, (Clause((0, 1, 2), (1, -1, 1)),)))
    tr = spsa.optimize(SchemeSpec.pure(1, 1), d, SpsaConfig(j_max=200))
    assert tr.at(200)["ar"] >= 0.9


def test_ergodic_rescale():
    cfg = SpsaConfig(ergodic_gain_rescale=True)
    assert spsa.rescaled_c0(cfg, SchemeSpec.standard(5)) == cfg.c0
    assert math.isclose(spsa.rescaled_c0(cfg, SchemeSpec.pure(3, 2)), 0.1 * math.exp(-2 * math.log(2) * 2))
    assert spsa.rescaled_c0(cfg, SchemeSpec.pure(20, 100)) == 1e-12
    assert spsa.rescaled_c0(SpsaConfig(), SchemeSpec.pure(20, 100)) == 0.1


def test_trace_csv_rows():
    tr = spsa.optimize(SchemeSpec.pure(2, 1), small_diag(), SpsaConfig(j_max=5, seed=0))
    rows = list(tr.csv_rows())
    assert len(rows) == 5 and rows[0][0] == 1
