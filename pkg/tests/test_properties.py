import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from hydrounit.equilibria import find_theta_equilibria, solve_mu0
from hydrounit.model import (
    RHS,
    deadband,
    flux_forward,
    flux_inverse,
    governor_rate,
    vane_saturation,
)
from hydrounit.params import GovernorParams, UnitParams
from hydrounit.stability import characteristic_polynomial

PARAMS = UnitParams()
GOV = PARAMS.gov
finite = st.floats(-5, 5, allow_nan=False)


@given(st.floats(-1, 1, allow_nan=False))
def test_deadband_odd(s):
    assert deadband(-s, GOV) == -deadband(s, GOV)


@given(st.floats(-1, 1, allow_nan=False), st.floats(0.05, 0.95))
def test_vane_saturation_within_stops(md, mu0):
    out = mu0 + vane_saturation(md, mu0, GOV)
    assert GOV.mu_min - 1e-15 <= out <= GOV.mu_max + 1e-15


@given(st.floats(-1, 1, allow_nan=False), st.floats(-1, 1, allow_nan=False), st.floats(0.05, 0.95))
def test_governor_rate_bounded(s, md, mu0):
    v = governor_rate(s, md, mu0, GOV)
    assert GOV.rho_o / GOV.T_c - 1e-12 <= v <= GOV.rho_c / GOV.T_c + 1e-12


@given(st.lists(finite, min_size=5, max_size=5))
def test_flux_roundtrip(psi):
    sol = flux_inverse(*psi, PARAMS)
    back = flux_forward(sol.i_d, sol.i_q, sol.E_q, sol.E_rd, sol.E_rq, PARAMS)
    assert np.allclose(back, psi, atol=1e-10, rtol=0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.4, 1.1))
def test_theta_roots_are_mod_two_pi(gamma):
    mu, _ = solve_mu0(gamma, PARAMS)
    roots = find_theta_equilibria(gamma, mu, PARAMS)
    assert all(0 <= r < 2 * math.pi for r in roots)
    assert roots == sorted(roots)


@settings(max_examples=50)
@given(st.lists(finite, min_size=9, max_size=9), st.floats(0.1, 0.9))
def test_rhs_periodic_in_angle(x, mu0):
    x = np.array(x)
    x[1] = x[1] / 10  # keep s > -1
    x[2] = abs(x[2]) + 1.0
    x[8] = 0.0
    f = RHS(PARAMS, mu0)
    y = x.copy()
    y[0] += 2 * math.pi
    assert np.allclose(f(x), f(y), rtol=1e-9, atol=1e-9)


@settings(max_examples=50)
@given(st.lists(st.floats(-10, -0.1), min_size=4, max_size=4))
def test_charpoly_of_diagonal(lams):
    c = characteristic_polynomial(np.diag(lams))
    assert np.allclose(c, np.poly(lams), rtol=1e-9, atol=1e-12)
