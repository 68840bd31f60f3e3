import math

import numpy as np
import pytest

from hydrounit.equilibria import generator_torque_curve
from hydrounit.errors import DomainError
from hydrounit.model import (
    IDX,
    RHS,
    State,
    compare_inversion_paths,
    deadband,
    flux_forward,
    flux_inverse,
    generator_torque_pu,
    governor_rate,
    instantaneous_power,
    inversion_coefficients,
    rate_limit,
    rhs,
    stop_logic,
    turbine_torque_pu,
    vane_saturation,
)
from hydrounit.params import GovernorParams

UNIT_GAIN = GovernorParams(sigma=1.0, z=0.002, T_c=0.5, rho_o=-0.1, rho_c=0.1, mu_min=0.05, mu_max=1.0)
WIDE_RATE = GovernorParams(sigma=1.0, z=0.002, T_c=0.5, rho_o=-10.0, rho_c=10.0, mu_min=0.05, mu_max=1.0)


# --- governor pieces ------------------------------------------------------------

@pytest.mark.parametrize("s, expected", [(0.0005, 0.0), (0.011, 0.010), (-0.011, -0.010)])
def test_deadband(s, expected):
    assert deadband(s, UNIT_GAIN) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("eta, expected", [(0.0, 0.0), (0.5, 0.1), (-0.5, -0.1)])
def test_rate_limit(eta, expected):
    assert rate_limit(eta, UNIT_GAIN) == expected


@pytest.mark.parametrize("mu_delta, expected", [(0.0, 0.0), (0.7, 0.5), (-0.5, -0.45)])
def test_vane_saturation(mu_delta, expected):
    assert vane_saturation(mu_delta, 0.5, UNIT_GAIN) == pytest.approx(expected, abs=1e-15)


def test_stop_logic_blocks_outward_push():
    assert stop_logic(0.55, 0.5, 0.1, UNIT_GAIN) == pytest.approx(0.1)


def test_stop_logic_allows_inward_motion():
    assert stop_logic(0.55, 0.5, -0.1, UNIT_GAIN) == 0.0


@pytest.mark.parametrize("rate", [-0.1, 0.0, 0.1])
def test_stop_logic_interior(rate):
    assert stop_logic(0.0, 0.5, rate, UNIT_GAIN) == 0.0


def test_governor_rate_at_rest():
    assert governor_rate(0.0, 0.0, 0.5, UNIT_GAIN) == 0.0


def test_governor_rate_composition():
    assert governor_rate(0.011, 0.0, 0.5, WIDE_RATE) == pytest.approx(-0.02)


def test_governor_rate_clamped():
    assert governor_rate(5.0, 0.0, 0.5, UNIT_GAIN) == pytest.approx(-0.2)


# --- flux algebra -----------------------------------------------------------------

def test_inversion_copies_reactances(params):
    c = inversion_coefficients(params.der, params.gen)
    assert c.a1 == 1.58
    assert c.a2 == 0.97
    assert c.a4 == pytest.approx(1.396 / params.der.x_r, rel=1e-12)
    assert c.a4 == pytest.approx(0.8238, abs=1e-4)


def test_zero_fluxes_give_zero(params):
    sol = flux_inverse(0, 0, 0, 0, 0, params)
    assert (sol.i_d, sol.i_q, sol.E_q, sol.E_rd, sol.E_rq) == (0, 0, 0, 0, 0)


def test_flux_roundtrip(params, rng):
    for psi in rng.uniform(-2, 2, size=(200, 5)):
        sol = flux_inverse(*psi, params)
        back = flux_forward(sol.i_d, sol.i_q, sol.E_q, sol.E_rd, sol.E_rq, params)
        np.testing.assert_allclose(back, psi, atol=1e-10, rtol=0)


def test_reference_coefficients_flagged(params):
    report = compare_inversion_paths(params, n=200)
    # the closed-form coefficients are not used by the model; this records
    # which of them disagree with the linear solve
    assert set(report["disagreeing"]) <= {"i_d", "i_q", "E_q", "E_rd", "E_rq"}
    assert report["samples"] == 200


def test_equilibrium_currents_match_closed_form(params, rated_eq):
    from hydrounit.equilibria import steady_currents

    st = rated_eq.state
    sol = flux_inverse(st.psi_d, st.psi_q, st.psi_r, st.psi_rd, st.psi_rq, params)
    i_d, i_q = steady_currents(params.U, rated_eq.theta, params)
    assert sol.i_d == pytest.approx(i_d, abs=1e-8)
    assert sol.i_q == pytest.approx(i_q, abs=1e-8)


# --- torques and power -------------------------------------------------------------

def test_generator_torque_trivial():
    assert generator_torque_pu(0, 0, 0, 0) == 0
    assert generator_torque_pu(1, 0, 0, 1) == 1


def test_torque_balance_at_equilibrium(params, rated_eq):
    st = rated_eq.state
    sol = flux_inverse(st.psi_d, st.psi_q, st.psi_r, st.psi_rd, st.psi_rq, params)
    m_t = turbine_torque_pu(st.Q, rated_eq.mu_0 + st.mu_delta, st.s, params)
    assert sol.M_G_pu == pytest.approx(m_t, rel=1e-8)


def test_turbine_torque_zero_flow(params):
    assert turbine_torque_pu(0.0, 0.5, 0.0, params) == 0.0


def test_turbine_torque_steady_flow(params):
    t, mu0 = params.tur, 0.4
    q_st = t.C * mu0 * math.sqrt(t.head)
    expected = t.k * t.C * t.head**1.5 * mu0 / params.gen.omega0**2
    assert turbine_torque_pu(q_st, mu0, 0.0, params) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("mu, s", [(0.0, 0.0), (-0.1, 0.0), (0.5, -1.0)])
def test_turbine_torque_domain(params, mu, s):
    with pytest.raises(DomainError):
        turbine_torque_pu(1.0, mu, s, params)


def test_power_trivial():
    assert instantaneous_power(0, 0, 15750, 0.3) == 0
    assert instantaneous_power(0.3, 0.2, 0, 0.3) == 0


def test_power_at_rated_matches_solution(params, rated_eq):
    st = rated_eq.state
    sol = flux_inverse(st.psi_d, st.psi_q, st.psi_r, st.psi_rd, st.psi_rq, params, theta=rated_eq.theta)
    assert sol.P == pytest.approx(instantaneous_power(sol.i_d, sol.i_q, params.U, rated_eq.theta))
    # generating mode: positive electrical torque, negative P in the printed sign convention
    assert sol.M_G_pu > 0 and sol.P < 0


def test_closed_form_torque_curve_matches_model(params, rated_eq):
    st = rated_eq.state
    sol = flux_inverse(st.psi_d, st.psi_q, st.psi_r, st.psi_rd, st.psi_rq, params)
    m_g = generator_torque_curve(params.U, rated_eq.theta, params)
    assert m_g == pytest.approx(sol.M_G_pu, rel=1e-6)


# --- right-hand side ---------------------------------------------------------------

def test_rhs_zero_at_equilibrium(params, rated_eq):
    assert np.linalg.norm(rhs(rated_eq.state, params, rated_eq.mu_0)) < 1e-8


def test_rhs_flow_relaxes(params, rated_eq):
    x = rated_eq.state.to_array()
    x[IDX["Q"]] *= 1.01
    assert rhs(x, params, rated_eq.mu_0)[IDX["Q"]] < 0


def test_rhs_governor_at_rest(params, rng):
    x = rng.uniform(-1, 1, 9)
    x[IDX["s"]] = 0.0
    x[IDX["mu_delta"]] = 0.0
    x[IDX["Q"]] = 50.0
    assert rhs(x, params, 0.3)[IDX["mu_delta"]] == 0.0


def test_rhs_angle_periodic(params, rng):
    f = RHS(params, 0.25)
    for _ in range(20):
        x = rng.uniform(-1, 1, 9)
        x[IDX["Q"]] = rng.uniform(10, 100)
        x[IDX["mu_delta"]] = rng.uniform(-0.1, 0.1)
        y = x.copy()
        y[0] += 2 * math.pi
        np.testing.assert_allclose(f(x), f(y), rtol=1e-9, atol=1e-9)


def test_rhs_domain_fault(params):
    x = np.zeros(9)
    x[IDX["s"]] = -1.5
    with pytest.raises(DomainError):
        rhs(x, params, 0.3)


def test_state_roundtrip():
    arr = np.arange(9.0)
    assert np.array_equal(State.from_array(arr).to_array(), arr)
    with pytest.raises(ValueError):
        State.from_array(np.zeros(8))
