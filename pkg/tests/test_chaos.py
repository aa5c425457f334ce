import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qacoa import chaos

from . import oracles


@pytest.mark.parametrize("x, y", [(0.5, 1.0), (0.0, 0.0), (0.25, 0.75)])
def test_logistic_values(x, y):
    assert chaos.logistic(x) == y


def test_logistic_domain():
    with pytest.raises(ValueError):
        chaos.logistic(1.5)
    with pytest.raises(ValueError):
        chaos.iterate(-0.1, 3)


def test_iterate_exact_cases():
    assert chaos.iterate(0.5, 2) == 0.0
    assert chaos.iterate(0.37, 0) == 0.37


@pytest.mark.parametrize("theta", [1 / 3, 1 / 5, 2 / 7, 0.3, 0.1234])
def test_iterate_matches_conjugacy(theta):
    # l^n(sin^2(pi theta / 2)) = sin^2(2^n pi theta / 2); short n keeps float error small
    x0 = math.sin(math.pi * theta / 2) ** 2
    for n in range(1, 9):
        want = math.sin(2**n * math.pi * theta / 2) ** 2
        assert abs(chaos.iterate(x0, n) - want) < 1e-9 * 4**n


def test_iterate_matches_high_precision_short():
    for x in (0.1, 0.77, 0.4999):
        assert abs(chaos.iterate(x, 10) - float(oracles.logistic_mp(x, 10))) < 1e-8


def test_iterate_stays_in_unit_interval():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, 100_000)
    n = rng.integers(0, 10_000, size=x.size)
    order = np.argsort(n)
    x, n = x[order], n[order]
    cur = x.copy()
    done = 0
    for step in range(int(n.max()) + 1):
        while done < n.size and n[done] == step:
            assert 0.0 <= cur[done] <= 1.0
            done += 1
        cur[done:] = 4.0 * cur[done:] * (1.0 - cur[done:])
    assert done == n.size


def test_orbit():
    np.testing.assert_array_equal(chaos.orbit(0.25, 2), [0.25, 0.75, 0.75])


def test_gle():
    assert chaos.gle(100) == 100 * math.log(2)


@pytest.mark.parametrize("c", [1, 3, 7])
def test_h_first_layer_is_one(c):
    assert chaos.h_derivative(0.3, 1, c) == 1.0
    assert chaos.h_second(0.3, 1, c) == 0.0


def test_h_at_critical_point():
    assert chaos.h_derivative(0.5, 2, 1) == 0.0


def test_h_second_single_factor():
    assert chaos.h_second(0.123, 2, 1) == -8.0


@settings(max_examples=60, deadline=None)
@given(theta=st.floats(0.01, 0.99), m=st.integers(1, 6), c=st.integers(1, 3))
def test_h_matches_finite_difference(theta, m, c):
    n = c * (m - 1)
    h = chaos.h_derivative(theta, m, c)
    if abs(h) >= 1e6 or abs(h) < 1e-3:
        return
    step = 1e-7
    fd = (float(oracles.logistic_mp(theta + step, n)) - float(oracles.logistic_mp(theta - step, n))) / (2 * step)
    assert abs(h - fd) <= 1e-4 * abs(h)


@settings(max_examples=60, deadline=None)
@given(theta=st.floats(0.01, 0.99), m=st.integers(2, 5), c=st.integers(1, 2))
def test_h_second_matches_finite_difference(theta, m, c):
    d2 = chaos.h_second(theta, m, c)
    if abs(d2) < 1e-2 or abs(d2) > 1e8:
        return
    step = 1e-6
    fd = (chaos.h_derivative(theta + step, m, c) - chaos.h_derivative(theta - step, m, c)) / (2 * step)
    assert abs(d2 - fd) <= 1e-3 * abs(d2)


def test_h_incremental_consistency():
    theta, c = 0.3141, 3
    for m in range(1, 6):
        xs = chaos.orbit(theta, c * m)
        factors = 4.0 * (1.0 - 2.0 * xs[c * (m - 1):c * m])
        assert math.isclose(chaos.h_derivative(theta, m + 1, c), chaos.h_derivative(theta, m, c) * np.prod(factors),
                            rel_tol=1e-12)


def test_h_vectorized():
    th = np.array([0.1, 0.2, 0.3])
    np.testing.assert_array_equal(chaos.h_derivative(th, 3, 2), [chaos.h_derivative(t, 3, 2) for t in th])


def test_lle_equals_log_h():
    rng = np.random.default_rng(2)
    for theta in rng.uniform(0, 1, 20):
        for p, c in ((2, 1), (4, 3), (6, 5)):
            want = math.log(abs(chaos.h_derivative(theta, p, c))) / (p - 1)
            assert math.isclose(chaos.phase_space_lle(theta, p, c), want, rel_tol=1e-9)


def test_lle_zero_factor_sentinel():
    assert chaos.phase_space_lle(0.5, 2, 1) == -math.inf


def test_lle_requires_p2():
    with pytest.raises(ValueError):
        chaos.phase_space_lle(0.3, 1, 1)


def test_lle_gle_limit():
    theta = np.random.default_rng(0).uniform(0, 1, 100)
    lle = chaos.phase_space_lle(theta, 50, 100)
    assert np.mean(np.abs(lle - chaos.gle(100)) / chaos.gle(100) < 0.05) >= 0.95


def test_lle_changes_sign_near_half():
    rec = chaos.orbit_record(0.5 - 1e-3, 10, 2)
    assert rec.lle[1] < 0
    assert rec.lle[-1] > 0


def test_orbit_record_consistent():
    rec = chaos.orbit_record(0.2, 5, 3)
    for m in range(1, 6):
        assert rec.iterates[m - 1] == chaos.iterate(0.2, 3 * (m - 1))
        assert math.isclose(rec.derivatives[m - 1], chaos.h_derivative(0.2, m, 3), rel_tol=1e-12)
    assert math.isnan(rec.lle[0])
    assert len(list(rec.rows())) == 5


def test_near_half_count():
    assert chaos.near_half_count(0.5, 3) == 1
    assert chaos.near_half_count(0.3, 3) == 0


def test_eta_p1_infinite():
    assert chaos.eta_bound(0.3, 1, 5) == math.inf
    assert chaos.log_eta_bound(0.3, 1, 5) == math.inf


@pytest.mark.parametrize("theta", [0.1, 0.3, 0.45, 0.8])
def test_eta_closed_form_p2(theta):
    assert math.isclose(chaos.eta_bound(theta, 2, 1), abs(1 - 2 * theta), rel_tol=1e-12)


def test_eta_matches_direct_ratio():
    for theta in (0.11, 0.37, 0.62):
        for p, c in ((3, 2), (5, 3)):
            h = chaos.h_derivative(theta, p, c)
            d = chaos.h_second(theta, p, c)
            assert math.isclose(chaos.eta_bound(theta, p, c), abs(2 * h / d), rel_tol=1e-9)


def test_eta_finite_at_large_depth():
    val = chaos.log_eta_bound(0.3, 20, 100)
    assert np.isfinite(val)
    assert abs(val / (19 * chaos.gle(100)) + 1) < 0.1


def test_arcsine_density_at_half():
    assert math.isclose(chaos.arcsine_pdf(0.5), 2 / math.pi)
    assert chaos.arcsine_cdf(0.0) == 0.0 and chaos.arcsine_cdf(1.0) == 1.0


def test_orbit_histogram_near_half():
    xs = chaos.orbit(0.1234, 1_000_000)[1000:]
    width = 0.02
    frac = np.mean(np.abs(xs - 0.5) < width / 2) / width
    assert abs(frac - 2 / math.pi) < 0.02


def test_invariant_density_ks():
    assert chaos.invariant_density_check(1_000_000) < 0.01


def test_invariant_density_degenerate():
    with pytest.raises(chaos.DegenerateOrbitError):
        chaos.invariant_density_check(10_000, x0=0.0)
    with pytest.raises(chaos.DegenerateOrbitError):
        chaos.invariant_density_check(10_000, x0=0.75)


def test_ergodic_average_of_log_stretch():
    u = np.random.default_rng(1).uniform(0, 1, 1_000_000)
    z = np.sin(np.pi * u / 2) ** 2
    vals = np.log(np.abs(4 * (1 - 2 * z)))
    se = vals.std() / math.sqrt(vals.size)
    assert abs(vals.mean() - math.log(2)) < 3 * se
