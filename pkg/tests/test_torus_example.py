import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from skewlab.torus_example import (MonotonicityError, PoincareTable, TorusVectorField,
                                   check_monotone, derived_equation, integrate_torus_ode,
                                   omega_limit_circle, poincare_map, rational_approximation,
                                   rotation_number, write_iterates, write_rotation_table)

SQRT2 = math.sqrt(2.0)
ARNOLD = TorusVectorField(0.6, ((0.8 / (2 * math.pi), 0, 1, "sin"), (0.1, 1, 0, "sin")))
LOCKED = TorusVectorField(0.52, ((0.1, -1, 2, "sin"),))


# -- integration ------------------------------------------------------------

def test_constant_field_is_exact():
    t, x = integrate_torus_ode(TorusVectorField.rigid(0.5), 0.2, 3.0)
    assert np.max(np.abs(x - (0.2 + 0.5 * t))) < 1e-12


def test_autonomous_traversal_time_matches_quadrature():
    a, b = 1.0, 0.5
    T, _ = quad(lambda x: 1.0 / (a + b * math.cos(2 * math.pi * x)), 0.0, 1.0, epsabs=1e-13)
    assert T == pytest.approx(1.0 / math.sqrt(a * a - b * b), abs=1e-12)
    _, x = integrate_torus_ode(TorusVectorField.autonomous(a, b), 0.0, T)
    assert abs(x[-1] - 1.0) < 1e-9


def test_reversibility():
    _, x = integrate_torus_ode(ARNOLD, 0.3, 10.0)
    _, back = integrate_torus_ode(ARNOLD, x[-1], 0.0, t0=10.0)
    assert abs(back[-1] - 0.3) < 1e-9


def test_step_size_limit():
    with pytest.raises(ValueError):
        integrate_torus_ode(ARNOLD, 0.0, 1.0, dt=2e-3)


# -- Poincare map -----------------------------------------------------------

def test_time_only_field_is_rigid_rotation():
    vf = TorusVectorField(0.2, ((0.5, 1, 0, "sin"), (0.3, 1, 0, "cos"), (0.1, 0, 0, "cos")))
    eta = np.linspace(0, 1, 7)
    assert np.max(np.abs(poincare_map(vf, eta) - (eta + 0.3))) < 1e-12
    assert PoincareTable(vf).shift == pytest.approx(0.3, abs=1e-15)


def test_zero_field_is_identity():
    eta = np.linspace(-1, 2, 9)
    assert np.array_equal(poincare_map(TorusVectorField(), eta), eta)


def test_arnold_map_against_finer_steps():
    eta = np.linspace(0, 1, 11)
    vf = TorusVectorField.arnold(0.4, 0.9)
    assert np.max(np.abs(poincare_map(vf, eta, 1e-3) - poincare_map(vf, eta, 1e-4))) < 1e-8


def test_lift_commutes_with_integer_translation():
    eta = np.random.default_rng(0).uniform(-3, 3, 100)
    gap = poincare_map(ARNOLD, eta + 1.0) - poincare_map(ARNOLD, eta) - 1.0
    assert np.max(np.abs(gap)) < 1e-10


@settings(max_examples=20)
@given(eta=st.floats(-5, 5), shift=st.integers(-3, 3))
def test_lift_commutes_property(eta, shift):
    assert abs(poincare_map(LOCKED, eta + shift) - poincare_map(LOCKED, eta) - shift) < 1e-10


def test_monotonicity_violation_detected():
    check_monotone(ARNOLD)
    steep = TorusVectorField(0.0, ((2000.0, 0, 1, "sin"),))
    with pytest.raises(MonotonicityError, match="reduce dt"):
        check_monotone(steep)


def test_table_matches_direct_map():
    table = PoincareTable(ARNOLD)
    eta = np.random.default_rng(1).uniform(-2, 2, 50)
    assert np.max(np.abs(table(eta) - poincare_map(ARNOLD, eta))) < 1e-9


# -- rotation number --------------------------------------------------------

def test_rigid_rotation_number_exact():
    res = rotation_number(TorusVectorField.rigid(0.3), n_iterates=1000)
    assert res.rho == 0.3 and all(r == 0.3 for _, r in res.table)
    assert [n for n, _ in res.table][-1] == 1000


def test_autonomous_rotation_number():
    n = 10_000
    res = rotation_number(TorusVectorField.autonomous(1.0, 0.5), n_iterates=n)
    assert abs(res.rho - math.sqrt(0.75)) < 2.0 / n
    assert res.seed_spread < 4.0 / n


def test_locked_rotation_number_and_cobweb():
    res = rotation_number(LOCKED, n_iterates=4000)
    assert res.locked == (1, 2) and res.rho == 0.5 and res.seed_spread < 1e-9
    # cobweb oracle: iterate the integrated map itself, no table
    x = 0.0
    lift = [x]
    for _ in range(200):
        x = poincare_map(LOCKED, x)
        lift.append(x)
    lift = np.asarray(lift)
    assert np.max(np.abs(lift[-40:] - lift[-42:-2] - 1.0)) < 1e-9


def test_seed_independence_for_arnold_field():
    n = 10_000
    res = rotation_number(ARNOLD, n_iterates=n)
    assert res.seed_spread < 4.0 / n


def test_rotation_number_needs_iterates():
    with pytest.raises(ValueError):
        rotation_number(ARNOLD, n_iterates=50)


def test_rational_approximation():
    assert rational_approximation(1 / 3) == Fraction(1, 3)
    assert rational_approximation(SQRT2 - 1) is None


# -- omega limit ------------------------------------------------------------

def test_irrational_rigid_rotation_is_dense():
    n = 10_000
    alpha = SQRT2 - 1
    om = omega_limit_circle(TorusVectorField.rigid(alpha), n_iterates=n)
    assert om.classification == "dense"
    # three-distance oracle: the gaps of {k alpha mod 1}, k = 1..n, computed directly
    pts = np.sort(np.mod(alpha * np.arange(1, n + 1), 1.0))
    gap = np.max(np.diff(np.append(pts, pts[0] + 1)))
    assert len(set(np.round(np.diff(pts), 9))) <= 3
    assert om.gap_stats[-1][1] == pytest.approx(gap, abs=1e-12)
    assert gap < 3.0 / n


def test_rational_rigid_rotation_is_periodic():
    om = omega_limit_circle(TorusVectorField.rigid(1 / 3))
    assert om.classification == "periodic" and om.period == 3
    assert np.allclose(om.points, [0, 1 / 3, 2 / 3], atol=1e-9)


def test_omega_limit_needs_iterates():
    with pytest.raises(ValueError):
        omega_limit_circle(ARNOLD, n_iterates=1000)


def test_classification_stable_under_step_halving():
    for vf in (TorusVectorField.rigid(SQRT2 - 1), LOCKED, ARNOLD):
        a = omega_limit_circle(vf, dt=1e-3).classification
        b = omega_limit_circle(vf, dt=5e-4).classification
        assert a == b


# -- derived equation -------------------------------------------------------

def test_rigid_derived_equation_is_stationary():
    eq = derived_equation(TorusVectorField.rigid(0.37), 0.37)
    _, x = eq.integrate(0.25, 5.0)
    assert np.max(np.abs(x - 0.25)) < 1e-14


def test_derived_solution_is_the_original_in_a_moving_frame():
    rho = rotation_number(ARNOLD).rho
    eq = derived_equation(ARNOLD, rho)
    t, x = eq.integrate(0.1, 20.0)
    _, y = integrate_torus_ode(ARNOLD, 0.1, 20.0)
    assert np.max(np.abs(x + rho * t - y)) < 1e-9


def test_derived_equation_bounded_and_dt_consistent():
    vf = TorusVectorField(0.3, ((0.05, 0, 1, "sin"), (0.05, 1, 0, "cos")))
    results = []
    for dt in (1e-3, 5e-4):
        table = PoincareTable(vf, dt=dt)
        rho = rotation_number(vf, table=table).rho
        mon = derived_equation(vf, rho).monitor(0.0, 1e4, table=table, dt=dt)
        assert mon.bound < 1.0
        assert [T for T, _ in mon.table][-1] == 1e4
        results.append(mon.sup_deviation)
    assert abs(results[0] - results[1]) < 1e-3
    short = derived_equation(vf, rho).monitor(0.0, 50.0)
    assert short.intra_period_bound == 0.0 and short.sup_deviation < 1.0


# -- serialization ----------------------------------------------------------

def test_dict_round_trip():
    assert TorusVectorField.from_dict(ARNOLD.to_dict()) == ARNOLD
    with pytest.raises(ValueError):
        TorusVectorField(0.0, ((1.0, 0, 1, "tan"),))


def test_csv_outputs(tmp_path):
    write_iterates(tmp_path / "it.csv", [0.25, 0.5])
    write_rotation_table(tmp_path / "rho.csv", [(1, 0.3), (2, 0.3)])
    assert (tmp_path / "it.csv").read_text().splitlines() == ["k,x_mod1", "0,0.25", "1,0.5"]
    assert (tmp_path / "rho.csv").read_text().splitlines() == ["n,rho_n", "1,0.3", "2,0.3"]
