"""Cross-module consistency checks run by ``hydrounit check``.

Each check returns a :class:`CheckResult`; none of them raises for a
failed comparison, so a report always lists every check exactly once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .equilibria import operating_equilibrium, steady_currents
from .errors import HydroUnitError
from .model import flux_forward, flux_inverse, inverse_matrices
from .params import UnitParams, derive_params
from .stability import analytic_jacobian, compare_jacobians, numeric_jacobian
from .transient import IntegrationConfig, integrate


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: dict = field(default_factory=dict)


def check_derived(params: UnitParams) -> CheckResult:
    """Configured derived reactances and time constants against the ratings."""
    ref = derive_params(params.gen, params.der.r_rd, params.der.r_rq)
    worst, bad = 0.0, []
    for f in fields(ref):
        a, b = getattr(params.der, f.name), getattr(ref, f.name)
        rel = abs(a - b) / abs(b)
        worst = max(worst, rel)
        if rel > 1e-9:
            bad.append(f"der.{f.name}")
    return CheckResult("derived_params", not bad, worst, 1e-9, {"inconsistent": bad})


def check_flux_roundtrip(params: UnitParams, n: int = 10_000, seed: int = 0) -> CheckResult:
    """Solve random fluxes for currents/EMFs and substitute them back."""
    rng = np.random.default_rng(seed)
    psi = rng.uniform(-2.0, 2.0, size=(n, 5))
    Mdi, Mqi = inverse_matrices(params)
    d = psi[:, [0, 2, 3]] @ Mdi.T
    q = psi[:, [1, 4]] @ Mqi.T
    worst = 0.0
    for k in range(n):
        back = flux_forward(d[k, 0], q[k, 0], d[k, 1], q[k, 1], d[k, 2], params)
        worst = max(worst, float(np.abs(back - psi[k]).max()))
    return CheckResult("flux_roundtrip", worst < 1e-10, worst, 1e-10, {"samples": n})


def check_equilibria(params: UnitParams, gammas=None) -> CheckResult:
    """Refined operating equilibria: residual norm and closed-form currents."""
    gammas = np.linspace(0.3, 1.1, 50) if gammas is None else gammas
    worst_res, worst_cur, failures = 0.0, 0.0, []
    for g in gammas:
        try:
            eq = operating_equilibrium(float(g), params)
        except HydroUnitError as exc:
            failures.append(f"gamma={g:.4f}: {exc}")
            continue
        st = eq.state
        p = params.with_gamma(eq.gamma)
        sol = flux_inverse(st.psi_d, st.psi_q, st.psi_r, st.psi_rd, st.psi_rq, p)
        i_d, i_q = steady_currents(p.U, eq.theta, p)
        worst_res = max(worst_res, eq.residual_norm)
        worst_cur = max(worst_cur, abs(i_d - sol.i_d), abs(i_q - sol.i_q))
    tol = params.numerics.residual_tol
    ok = not failures and worst_res < tol and worst_cur < 1e-8
    return CheckResult(
        "equilibrium_residual", ok, worst_res, tol,
        {"max_current_mismatch": worst_cur, "failures": failures, "points": len(gammas)},
    )


def check_jacobian(params: UnitParams, gammas=(0.7, 0.8, 0.89, 1.0), rtol: float = 1e-5) -> CheckResult:
    """Analytic Jacobian (from the ratings) against finite differences of the model.

    The analytic side re-derives the electrical constants from the
    generator ratings, so a config whose derived values were edited by hand
    shows up here as entry mismatches.
    """
    ref = replace(params, der=derive_params(params.gen, params.der.r_rd, params.der.r_rq))
    worst, flagged, printed = 0.0, set(), set()
    for g in gammas:
        try:
            eq = operating_equilibrium(g, params)
        except HydroUnitError as exc:
            return CheckResult("jacobian", False, math.inf, rtol, {"error": str(exc)})
        p = params.with_gamma(g)
        numeric = numeric_jacobian(eq.state, p, eq.mu_0, z=0.0)
        rel, flags = compare_jacobians(
            analytic_jacobian(eq, ref.with_gamma(g), "consistent", "linearized"), numeric, rtol
        )
        worst = max(worst, rel)
        flagged.update((f.i, f.k) for f in flags)
        _, pflags = compare_jacobians(analytic_jacobian(eq, ref.with_gamma(g), "printed"), numeric, rtol)
        printed.update((f.i, f.k) for f in pflags)
    return CheckResult(
        "jacobian", not flagged, worst, rtol,
        {
            "mismatched_entries": sorted(flagged),
            "printed_variant_flags": sorted(printed),
        },
    )


def rk4_error_ratio(params: UnitParams, dt: float = 1e-3, T: float = 1.0) -> tuple[float, list]:
    """Global-error ratio of RK4 under step halving on a smooth segment.

    Starts near the rated equilibrium with the deadband disabled, so the
    right-hand side is smooth along the whole segment, and compares end
    states for ``dt``, ``dt/2`` and ``dt/4``.
    """
    eq = operating_equilibrium(1.0, params)
    x0 = eq.state.to_array()
    x0[0] += 0.05
    x0[1] += 0.01
    ends = []
    for h in (dt, dt / 2, dt / 4):
        cfg = IntegrationConfig(dt=h, T_end=T, T_discard=0.0, record_stride=1, event_capacity=0)
        ends.append(integrate(x0, params, eq.mu_0, cfg, z=0.0).states[-1])
    scale = np.maximum(1.0, np.abs(ends[-1]))
    e1 = float(np.abs((ends[0] - ends[1]) / scale).max())
    e2 = float(np.abs((ends[1] - ends[2]) / scale).max())
    return e1 / e2, [e1, e2]


def check_rk4_order(params: UnitParams) -> CheckResult:
    ratio, errs = rk4_error_ratio(params)
    return CheckResult("rk4_order", 12.0 <= ratio <= 20.0, ratio, 16.0, {"differences": errs})


def run_checks(params: UnitParams, seed: int = 0) -> list[CheckResult]:
    """Every check in a fixed order; an exception inside a check fails only that check."""
    plan = (
        ("derived_params", lambda: check_derived(params)),
        ("flux_roundtrip", lambda: check_flux_roundtrip(params, seed=seed)),
        ("jacobian", lambda: check_jacobian(params)),
        ("equilibrium_residual", lambda: check_equilibria(params)),
        ("rk4_order", lambda: check_rk4_order(params)),
    )
    results = []
    for name, fn in plan:
        try:
            results.append(fn())
        except HydroUnitError as exc:
            results.append(CheckResult(name, False, math.nan, math.nan, {"error": str(exc)}))
    return results
