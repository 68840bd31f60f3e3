"""Operating points of the unit.

An equilibrium has ``s = 0`` and ``mu_delta = 0``; the vane opening ``mu_0``
balances the turbine torque against the generator torque at the nominal
angle ``theta0``, and the full nine-dimensional state is then assembled from
steady-state currents and refined by Newton iteration on ``rhs(x) = 0``.

Torques here are in the same units as the model equations, which carry the
stator voltage in volts, so residual tolerances on torque balance are
relative to the turbine torque.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from ._parallel import parallel_map
from .errors import HydroUnitError, RefinementError
from .model import RHS, State, flux_inverse, instantaneous_power
from .params import UnitParams

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Equilibrium:
    """Refined steady state.

    ``theta`` is the absolute rotor angle ``theta0 + theta_delta`` (not wrapped).
    """

    state: State
    mu_0: float
    gamma: float
    theta: float
    theta_branch: int
    residual_norm: float
    saturated: bool = False
    iterations: int = 0

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "mu_0": self.mu_0,
            "theta": self.theta,
            "theta_branch": self.theta_branch,
            "residual_norm": self.residual_norm,
            "saturated": self.saturated,
            "iterations": self.iterations,
            "state": {k: getattr(self.state, k) for k in self.state.__dataclass_fields__},
        }


@dataclass
class BalanceCurve:
    """Balance quantities along a voltage grid; failed points hold NaN."""

    gamma_grid: list
    mu0_values: list
    theta_values: list
    power_values: list
    saturated: list
    residuals: list
    errors: list


# --- closed forms -----------------------------------------------------------

def steady_currents(U: float, theta: float, params: UnitParams, form: str = "steady"):
    """Stator currents at a steady state with ``E_q = E_r``.

    ``form="steady"`` solves the stator balance
    ``r i_d + x_q i_q = U sin(theta)``, ``x_d i_d - r i_q = U cos(theta) - E_r``.
    ``form="printed"`` evaluates the reference closed forms, whose ``i_q``
    carries the opposite sign on the ``r U cos(theta)`` term.
    """
    g = params.gen
    r, xd, xq, Er = g.r, g.x_d, g.x_q, g.E_r
    D = r * r + xd * xq
    sn, cs = math.sin(theta), math.cos(theta)
    if form == "steady":
        i_d = (r * U * sn + xq * (U * cs - Er)) / D
        i_q = (xd * U * sn - r * U * cs + r * Er) / D
    elif form == "printed":
        i_d = -xq / D * (-r / xq * U * sn - U * cs + Er)
        i_q = -r / D * (-xd / r * U * sn - U * cs - Er)
    else:
        raise ValueError(f"unknown form {form!r}")
    return i_d, i_q


def generator_torque_curve(U: float, theta: float, params: UnitParams, form: str = "steady") -> float:
    """Steady-state generator torque as a function of voltage and angle.

    Parameters
    ----------
    form : {"steady", "printed"}
        ``"steady"`` is ``(x_d - x_q) i_d i_q + E_r i_q`` with the currents of
        :func:`steady_currents`; it equals ``psi_d i_q - psi_q i_d`` at every
        constructed equilibrium.  ``"printed"`` evaluates the reference
        multi-term expression verbatim, which differs from the former by
        roughly one percent at the default parameters.
    """
    g = params.gen
    if form == "steady":
        i_d, i_q = steady_currents(U, theta, params)
        return (g.x_d - g.x_q) * i_d * i_q + g.E_r * i_q
    if form != "printed":
        raise ValueError(f"unknown form {form!r}")
    r, xd, xq, Er = g.r, g.x_d, g.x_q, g.E_r
    D = r * r + xd * xq
    sn, cs = math.sin(theta), math.cos(theta)
    bracket = (
        -U * U * xd * sn * sn
        + U * U * xq * cs * cs
        - (r * r - xd * xq) / r * U * U * sn * cs
        - Er * (xd * xq - r * r) / r * U * sn
        + 2 * xq * Er * U * cs
    )
    return (
        r * (xd - xq) / D**2 * bracket
        - Er / D * (-xd * U * sn + r * U * cs)
        + r * xq * Er * (xd - xq) / D**2
        - r * Er * Er / D
    )


def turbine_slope(params: UnitParams) -> float:
    t = params.tur
    return t.k * t.C * t.head**1.5 / params.gen.omega0**2


def turbine_torque_linear(mu_0: float, params: UnitParams) -> float:
    """Steady turbine torque, linear in the vane opening."""
    return turbine_slope(params) * mu_0


def solve_mu0(gamma: float, params: UnitParams, form: str = "steady") -> tuple[float, bool]:
    """Vane opening balancing the generator torque at ``theta0``.

    Returns
    -------
    mu_0 : float
        Clamped to ``[mu_min, mu_max]``.
    saturated : bool
        True when clamping was applied.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    U = gamma * params.gen.U_nom
    mu = generator_torque_curve(U, params.gen.theta0, params, form) / turbine_slope(params)
    lo, hi = params.gov.mu_min, params.gov.mu_max
    if mu < lo:
        return lo, True
    if mu > hi:
        return hi, True
    return mu, False


def find_theta_equilibria(
    gamma: float, mu_0: float, params: UnitParams, form: str = "steady"
) -> list[float]:
    """All balance roots ``theta`` in ``[0, 2*pi)``, sorted.

    Sign changes of ``M_G(U, theta) - M_T(mu_0)`` on a uniform periodic grid
    are bracketed and polished with Brent's method to ~1e-14 rad.  A root
    within 1e-9 of ``theta0`` is snapped onto ``theta0`` so that the operating
    point has ``theta_delta = 0`` exactly.
    """
    U = gamma * params.gen.U_nom
    m_t = turbine_torque_linear(mu_0, params)

    def f(th):
        return generator_torque_curve(U, th, params, form) - m_t

    n = params.numerics.theta_grid
    grid = np.linspace(0.0, TWO_PI, n + 1)
    vals = np.array([f(t) for t in grid])
    roots = []
    for i in range(n):
        a, b = grid[i], grid[i + 1]
        fa, fb = vals[i], vals[i + 1]
        if fa == 0.0:
            roots.append(a)
        elif fa * fb < 0.0:
            roots.append(brentq(f, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200))
    th0 = params.gen.theta0
    out = []
    for t in roots:
        t = t % TWO_PI
        if abs(t - th0) < 1e-9:
            t = th0
        out.append(t)
    return sorted(out)


def operating_branch(thetas: list[float], theta0: float) -> int | None:
    """Index of the root nearest ``theta0`` in circular distance."""
    if not thetas:
        return None
    dist = [abs((t - theta0 + math.pi) % TWO_PI - math.pi) for t in thetas]
    return int(np.argmin(dist))


# --- full-state construction ------------------------------------------------

def equilibrium_guess(
    gamma: float, mu_0: float, theta: float, params: UnitParams, formulas: str = "steady"
) -> np.ndarray:
    """Nine-dimensional steady state assembled from closed forms.

    ``formulas="printed"`` uses the reference current expressions and the
    reference ``psi_rq`` (which divides by ``x_rd``); Newton refinement then
    removes the resulting residual.
    """
    g, d, t = params.gen, params.der, params.tur
    U = gamma * g.U_nom
    i_d, i_q = steady_currents(U, theta, params, "printed" if formulas == "printed" else "steady")
    Er = g.E_r
    x_rq_used = d.x_rd if formulas == "printed" else d.x_rq
    return np.array([
        theta - g.theta0,
        0.0,
        t.C * mu_0 * math.sqrt(t.head),
        g.x_d * i_d + Er,
        g.x_q * i_q,
        d.x_ad**2 / d.x_r * i_d + Er,
        d.x_ad**2 / d.x_rd * i_d + d.x_ad / d.x_rd * Er,
        d.x_aq**2 / x_rq_used * i_q,
        0.0,
    ])


def _fd_jacobian(f, x, f0=None):
    n = x.size
    J = np.empty((n, n))
    for j in range(n):
        h = 1e-6 * max(1.0, abs(x[j]))
        e = np.zeros(n)
        e[j] = h
        J[:, j] = (f(x + e) - f(x - e)) / (2 * h)
    return J


def refine_equilibrium(
    x_guess,
    params: UnitParams,
    mu_0: float,
    *,
    branch: int = 0,
    saturated: bool = False,
    max_iter: int | None = None,
    tol: float | None = None,
) -> Equilibrium:
    """Damped Newton iteration on the full nine-dimensional ``rhs(x) = 0``.

    The governor is evaluated with its deadband, so near ``s = 0`` the
    ninth equation reduces to ``-mu_delta / T_c``.  After convergence
    ``s`` and ``mu_delta`` are set to exactly zero and the residual is
    re-evaluated.

    Raises
    ------
    RefinementError
        If the residual norm does not fall below ``tol`` within ``max_iter``
        iterations.
    """
    max_iter = params.numerics.refine_max_iter if max_iter is None else max_iter
    tol = params.numerics.residual_tol if tol is None else tol
    f = RHS(params, mu_0)
    x = np.array(x_guess.to_array() if isinstance(x_guess, State) else x_guess, dtype=float)

    def safe_norm(v):
        try:
            return float(np.linalg.norm(f(v)))
        except HydroUnitError:
            return math.inf

    res = safe_norm(x)
    it = 0
    while res >= tol and it < max_iter:
        it += 1
        F = f(x)
        try:
            step = np.linalg.solve(_fd_jacobian(f, x), -F)
        except np.linalg.LinAlgError as exc:
            raise RefinementError(f"singular Newton matrix ({exc})", res) from None
        lam = 1.0
        while lam > 1e-6:
            trial = x + lam * step
            r_trial = safe_norm(trial)
            if r_trial < res:
                x, res = trial, r_trial
                break
            lam *= 0.5
        else:
            break
    if res < tol:
        snapped = x.copy()
        snapped[1] = 0.0
        snapped[8] = 0.0
        r_snap = safe_norm(snapped)
        if r_snap < tol:
            x, res = snapped, r_snap
    if not res < tol:
        raise RefinementError(f"equilibrium refinement did not converge in {it} iterations", res)
    return Equilibrium(
        state=State.from_array(x), mu_0=float(mu_0), gamma=params.gamma,
        theta=float(params.gen.theta0 + x[0]), theta_branch=branch, residual_norm=res,
        saturated=saturated, iterations=it,
    )


def build_equilibrium(
    gamma: float,
    mu_0: float,
    theta: float,
    params: UnitParams,
    *,
    branch: int = 0,
    saturated: bool = False,
    formulas: str = "steady",
) -> Equilibrium:
    """Closed-form steady state at ``(gamma, mu_0, theta)``, then Newton-refined."""
    p = params.with_gamma(gamma)
    guess = equilibrium_guess(gamma, mu_0, theta, p, formulas)
    return refine_equilibrium(guess, p, mu_0, branch=branch, saturated=saturated)


def equilibria_at(gamma: float, params: UnitParams) -> tuple[list[Equilibrium], int | None]:
    """Every balance branch at ``gamma`` plus the index of the operating one."""
    mu_0, sat = solve_mu0(gamma, params)
    thetas = find_theta_equilibria(gamma, mu_0, params)
    op = operating_branch(thetas, params.gen.theta0)
    eqs = [
        build_equilibrium(gamma, mu_0, th, params, branch=i, saturated=sat)
        for i, th in enumerate(thetas)
    ]
    return eqs, op


def operating_equilibrium(gamma: float, params: UnitParams) -> Equilibrium:
    """Refined equilibrium on the branch nearest ``theta0``.

    Raises
    ------
    RefinementError
        If the balance equation has no root at this voltage.
    """
    mu_0, sat = solve_mu0(gamma, params)
    if sat:
        thetas = find_theta_equilibria(gamma, mu_0, params)
        op = operating_branch(thetas, params.gen.theta0)
        if op is None:
            raise RefinementError(f"no torque-balance root at gamma={gamma}", math.inf)
        theta = thetas[op]
    else:
        theta = params.gen.theta0
        op = operating_branch(find_theta_equilibria(gamma, mu_0, params), theta)
    return build_equilibrium(gamma, mu_0, theta, params, branch=op, saturated=sat)


def equilibrium_power(eq: Equilibrium, params: UnitParams) -> float:
    """Instantaneous power at a refined equilibrium (reference sign convention)."""
    st = eq.state
    p = params.with_gamma(eq.gamma)
    sol = flux_inverse(st.psi_d, st.psi_q, st.psi_r, st.psi_rd, st.psi_rq, p)
    return instantaneous_power(sol.i_d, sol.i_q, p.U, eq.theta)


def _balance_point(gamma: float, params: UnitParams):
    try:
        eq = operating_equilibrium(gamma, params)
    except HydroUnitError as exc:
        mu_0, sat = solve_mu0(gamma, params)
        return (mu_0, math.nan, math.nan, sat, math.nan, str(exc))
    return (
        eq.mu_0, eq.theta % TWO_PI, equilibrium_power(eq, params), eq.saturated,
        eq.residual_norm, "",
    )


def balance_curves(gamma_grid, params: UnitParams, jobs: int = 1) -> BalanceCurve:
    """Per-voltage vane opening, operating angle and power.

    Points that fail are kept as NaN gap markers with the error message in
    ``errors``; the sweep itself never aborts.
    """
    grid = [float(g) for g in gamma_grid]
    if not grid:
        raise ValueError("gamma grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("gamma grid must be strictly ascending")
    rows = parallel_map(functools.partial(_balance_point, params=params), grid, jobs)
    return BalanceCurve(
        gamma_grid=grid,
        mu0_values=[r[0] for r in rows],
        theta_values=[r[1] for r in rows],
        power_values=[r[2] for r in rows],
        saturated=[r[3] for r in rows],
        residuals=[r[4] for r in rows],
        errors=[r[5] for r in rows],
    )


BALANCE_COLUMNS = ("gamma", "mu0", "saturated", "theta", "power", "residual")


def balance_rows(curve: BalanceCurve) -> list[tuple]:
    return [
        (g, m, int(s), t, p, r)
        for g, m, s, t, p, r in zip(
            curve.gamma_grid, curve.mu0_values, curve.saturated,
            curve.theta_values, curve.power_values, curve.residuals,
        )
    ]
