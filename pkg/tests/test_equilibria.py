import math

import numpy as np
import pytest

from hydrounit.equilibria import (
    balance_curves,
    build_equilibrium,
    equilibria_at,
    find_theta_equilibria,
    generator_torque_curve,
    operating_equilibrium,
    refine_equilibrium,
    solve_mu0,
    turbine_slope,
    turbine_torque_linear,
)
from hydrounit.errors import RefinementError
from hydrounit.model import rhs
from hydrounit.params import GovernorParams, UnitParams


def test_torque_curve_at_zero_voltage(params):
    g = params.gen
    r, xd, xq, Er = g.r, g.x_d, g.x_q, g.E_r
    D = r * r + xd * xq
    expected = r * xq * Er * (xd - xq) / D**2 - r * Er**2 / D
    assert generator_torque_curve(0.0, 0.7, params, "printed") == pytest.approx(expected, rel=1e-12)


def test_printed_torque_curve_close_to_steady(params):
    th = params.gen.theta0
    steady = generator_torque_curve(params.U, th, params)
    printed = generator_torque_curve(params.U, th, params, "printed")
    assert printed == pytest.approx(steady, rel=0.02)


def test_turbine_linear_zero():
    assert turbine_torque_linear(0.0, UnitParams()) == 0.0


def test_mu0_balances_torque(params):
    mu, sat = solve_mu0(1.0, params)
    assert not sat
    assert params.gov.mu_min < mu < params.gov.mu_max
    m_g = generator_torque_curve(params.U, params.gen.theta0, params)
    assert abs(turbine_torque_linear(mu, params) - m_g) / m_g < 1e-10


def test_mu0_saturates_low():
    p = UnitParams(gov=GovernorParams(mu_min=0.5))
    mu, sat = solve_mu0(1.0, p)
    assert sat and mu == 0.5


def test_mu0_rejects_nonpositive_gamma(params):
    with pytest.raises(ValueError):
        solve_mu0(0.0, params)


def test_operating_angle_is_root(params):
    mu, _ = solve_mu0(1.0, params)
    roots = find_theta_equilibria(1.0, mu, params)
    assert params.gen.theta0 in roots
    assert all(0 <= r < 2 * math.pi for r in roots)


def test_roots_are_balanced(params):
    mu, _ = solve_mu0(0.89, params)
    roots = find_theta_equilibria(0.89, mu, params)
    m_t = turbine_torque_linear(mu, params)
    for th in roots:
        assert generator_torque_curve(0.89 * params.gen.U_nom, th, params) == pytest.approx(m_t, abs=1e-6)


def test_refined_equilibrium_residual(rated_eq):
    assert rated_eq.residual_norm < 1e-8
    assert rated_eq.state.s == 0.0 and rated_eq.state.mu_delta == 0.0
    assert rated_eq.state.theta_delta == 0.0


def test_refine_fixed_point(params, rated_eq):
    again = refine_equilibrium(rated_eq.state, params, rated_eq.mu_0)
    assert again.iterations == 0
    np.testing.assert_array_equal(again.state.to_array(), rated_eq.state.to_array())


def test_refine_converges_from_perturbation(params, rated_eq, rng):
    x = rated_eq.state.to_array() * (1 + 1e-4 * rng.standard_normal(9))
    eq = refine_equilibrium(x, params, rated_eq.mu_0)
    assert eq.residual_norm < 1e-8


def test_refine_fails_loudly_far_away(params, rated_eq):
    x = np.array([3.0, 0.5, 1.0, 50.0, -40.0, 30.0, 20.0, -10.0, 0.3])
    with pytest.raises(RefinementError) as ei:
        refine_equilibrium(x, params, rated_eq.mu_0, max_iter=5)
    assert ei.value.residual > 1e-8


def test_printed_formulas_refine_to_same_point(params, rated_eq):
    eq = build_equilibrium(1.0, rated_eq.mu_0, rated_eq.theta, params, formulas="printed")
    np.testing.assert_allclose(eq.state.to_array(), rated_eq.state.to_array(), rtol=1e-7, atol=1e-9)


def test_all_branches_are_equilibria(params):
    eqs, op = equilibria_at(0.89, params)
    assert op is not None and len(eqs) >= 2
    for eq in eqs:
        assert np.linalg.norm(rhs(eq.state, params.with_gamma(0.89), eq.mu_0)) < 1e-8


def test_balance_curve_single_point(params):
    curve = balance_curves([1.0], params)
    mu, _ = solve_mu0(1.0, params)
    assert curve.mu0_values == [mu]
    assert curve.residuals[0] < 1e-8
    assert curve.errors == [""]


def test_balance_curve_grid(params):
    grid = np.linspace(0.3, 1.1, 9)
    curve = balance_curves(grid, params)
    assert len(curve.mu0_values) == 9
    assert not any(curve.saturated)
    assert np.all(np.diff(curve.mu0_values) > 0)


def test_balance_curve_failure_is_gap():
    p = UnitParams(gov=GovernorParams(mu_min=0.3))
    curve = balance_curves([0.3, 1.0], p)
    assert curve.errors[0]
    assert math.isnan(curve.theta_values[0])
    assert not curve.errors[1]


def test_balance_curve_grid_validation(params):
    with pytest.raises(ValueError):
        balance_curves([], params)
    with pytest.raises(ValueError):
        balance_curves([1.0, 0.9], params)


def test_equilibrium_dict(rated_eq):
    d = rated_eq.to_dict()
    assert d["gamma"] == 1.0 and "state" in d


def test_turbine_slope_positive(params):
    assert turbine_slope(params) > 0


def test_parallel_sweep_matches_serial(params):
    grid = [0.6, 0.8, 1.0]
    a = balance_curves(grid, params, jobs=1)
    b = balance_curves(grid, params, jobs=2)
    assert a == b
