"""Local stability of equilibria.

The analytic Jacobian is available in two variants.  ``"printed"`` uses
the reference entry list verbatim: closed-form inversion coefficients,
the reference signs of ``j[2,9]`` and ``j[3,9]``, and ``j[9,2] = 1/T_c``.
``"consistent"`` keeps the same entry structure but takes the inversion
coefficients from the linear solve, differentiates the vane terms with
the correct sign and sets ``j[9,2]`` from the governor mode:

* ``governor="linearized"``: ``-sigma/T_c``, the slope of the governor
  outside its deadband;
* ``governor="deadband"``: ``0``, the exact local derivative at ``s = 0``
  when ``z > 0``.

Classification runs through two independent paths, a Routh array built
from the Faddeev-LeVerrier characteristic polynomial and the spectrum
from a dense eigensolver, both after diagonal balancing.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import matrix_balance

from ._parallel import parallel_map
from .equilibria import Equilibrium, equilibria_at, operating_equilibrium
from .errors import HydroUnitError, NumericError, OverflowRiskError, SmoothnessError
from .model import RHS, InversionCoefficients, inverse_matrices, inversion_coefficients
from .params import UnitParams

METHODS = ("routh_hurwitz", "eigen_bound")


def consistent_coefficients(params: UnitParams) -> InversionCoefficients:
    """Inversion coefficients read off the exact inverse of the flux relations.

    Returned with the same sign conventions as the reference closed forms,
    so they can be dropped into the reference Jacobian entries.
    """
    pc = inversion_coefficients(params.der, params.gen)
    Mdi, Mqi = inverse_matrices(params)
    return InversionCoefficients(
        a1=pc.a1, a2=pc.a2, a3=pc.a3, a4=pc.a4, a5=pc.a5, a6=pc.a6, a7=pc.a7, b1=pc.b1,
        X_d=Mdi[0, 0], X_r=-Mdi[0, 1], X_rd=Mdi[0, 2],
        Y_q=Mqi[0, 0], Y_rq=-Mqi[0, 1],
        Z_d=Mdi[1, 0], Z_r=Mdi[1, 1], Z_rd=-Mdi[1, 2],
        P_q=Mqi[1, 0], P_rq=-Mqi[1, 1],
        Q_d=-Mdi[2, 0], Q_r=Mdi[2, 1], Q_rd=Mdi[2, 2],
    )


def analytic_jacobian(
    eq: Equilibrium,
    params: UnitParams,
    variant: str = "consistent",
    governor: str = "linearized",
) -> np.ndarray:
    """Jacobian of the right-hand side at an equilibrium.

    Parameters
    ----------
    eq : Equilibrium
    params : UnitParams
        Voltage is taken from ``eq.gamma``.
    variant : {"consistent", "printed"}
    governor : {"linearized", "deadband"}
        Only used by the ``"consistent"`` variant.

    Returns
    -------
    ndarray, shape (9, 9)
        Entries outside the reference nonzero pattern are exactly zero.
    """
    g, d, t, gv = params.gen, params.der, params.tur, params.gov
    if variant == "printed":
        c = inversion_coefficients(d, g)
        sign_mu = 1.0
        j92 = 1.0 / gv.T_c
    elif variant == "consistent":
        c = consistent_coefficients(params)
        sign_mu = -1.0
        if governor == "linearized":
            j92 = -gv.sigma / gv.T_c
        elif governor == "deadband":
            j92 = 0.0
        else:
            raise ValueError(f"unknown governor mode {governor!r}")
    else:
        raise ValueError(f"unknown variant {variant!r}")

    w0, r, TJ, C, k, mu0 = g.omega0, g.r, d.T_J, t.C, t.k, eq.mu_0
    U = eq.gamma * g.U_nom
    Sl = t.S_area / (t.l * t.rho_w)
    st = eq.state
    Q = st.Q
    pd, pq, pr, prd, prq = st.psi_d, st.psi_q, st.psi_r, st.psi_rd, st.psi_rq
    ang = g.theta0 + st.theta_delta

    J = np.zeros((9, 9))
    J[0, 1] = w0
    J[1, 1] = -k * Q**3 / (TJ * C**2 * w0**2 * mu0**2)
    J[1, 2] = 3 * k * Q**2 / (TJ * C**2 * w0**2 * mu0**2)
    J[1, 3] = ((c.X_d - c.Y_q) * pq + c.Y_rq * prq) / TJ
    J[1, 4] = (-c.Y_q * pd + c.X_d * pd - c.X_r * pr + c.X_rd * prd) / TJ
    J[1, 5] = -c.X_r * pq / TJ
    J[1, 6] = c.X_rd * pq / TJ
    J[1, 7] = c.Y_rq * pd / TJ
    J[1, 8] = sign_mu * 2 * k * Q**3 / (TJ * C**2 * mu0**3 * w0**2)
    J[2, 2] = -2 * Sl * Q / (C**2 * mu0**2)
    J[2, 8] = -sign_mu * 2 * Sl * Q**2 / (C**2 * mu0**3)
    J[3, 0] = w0 * U * math.cos(ang)
    J[3, 1] = -w0 * pq
    J[3, 3] = -w0 * r * c.X_d
    J[3, 4] = -w0
    J[3, 5] = w0 * r * c.X_r
    J[3, 6] = -w0 * r * c.X_rd
    J[4, 0] = w0 * U * math.sin(ang)
    J[4, 1] = w0 * pd
    J[4, 3] = w0
    J[4, 4] = -w0 * r * c.Y_q
    J[4, 7] = w0 * r * c.Y_rq
    J[5, 3] = -c.Z_d / g.T_r
    J[5, 5] = -c.Z_r / g.T_r
    J[5, 6] = c.Z_rd / g.T_r
    J[6, 3] = c.Q_d / d.T_rd
    J[6, 5] = -c.Q_r / d.T_rd
    J[6, 6] = -c.Q_rd / d.T_rd
    J[7, 4] = c.P_q / d.T_rq
    J[7, 7] = -c.P_rq / d.T_rq
    J[8, 1] = j92
    J[8, 8] = -1.0 / gv.T_c
    return J


# --- finite differences ------------------------------------------------------

def finite_difference_jacobian(f, x, h: float = 1e-6, guard=None) -> np.ndarray:
    """Central-difference Jacobian of ``f`` at ``x``.

    Parameters
    ----------
    f : callable
        Maps an (n,) array to an (m,) array.
    h : float
        Relative step; component ``j`` uses ``h * max(1, |x_j|)``.
    guard : callable, optional
        ``guard(point)`` returns a hashable description of the smooth piece
        containing ``point``; a probe on a different piece than ``x`` raises
        :class:`SmoothnessError`.
    """
    if not 1e-8 <= h <= 1e-4:
        raise ValueError("relative step h must lie in [1e-8, 1e-4]")
    x = np.asarray(x, dtype=float)
    base = guard(x) if guard is not None else None
    cols = []
    for j in range(x.size):
        hj = h * max(1.0, abs(x[j]))
        e = np.zeros_like(x)
        e[j] = hj
        xp, xm = x + e, x - e
        if guard is not None and (guard(xp) != base or guard(xm) != base):
            raise SmoothnessError(f"probe along component {j + 1} crosses a governor boundary")
        cols.append((np.asarray(f(xp)) - np.asarray(f(xm))) / (2 * hj))
    return np.column_stack(cols)


def _governor_piece(x, params: UnitParams, mu_0: float, z: float) -> tuple:
    gv = params.gov
    s, md = x[1], x[8]
    if z > 0:
        band = 1 if s >= z / 2 else (-1 if s <= -z / 2 else 0)
    else:
        band = 0
    mu = mu_0 + md
    vane = -1 if mu < gv.mu_min else (1 if mu > gv.mu_max else 0)
    es = gv.sigma * (s - math.copysign(z / 2, s)) if band else (gv.sigma * s if z == 0 else 0.0)
    eta = -es - (min(max(mu, gv.mu_min), gv.mu_max) - mu_0)
    rate = -1 if eta < gv.rho_o else (1 if eta > gv.rho_c else 0)
    return band, vane, rate


def numeric_jacobian(
    x, params: UnitParams, mu_0: float, h: float = 1e-6, z: float | None = None
) -> np.ndarray:
    """Central-difference Jacobian of the model right-hand side.

    ``z`` overrides the deadband width; ``z=0`` makes the governor smooth
    through ``s = 0``.

    Raises
    ------
    SmoothnessError
        If a probe crosses the deadband edge, the rate clamp or a vane stop.
    """
    zz = params.gov.z if z is None else z
    x = np.asarray(x.to_array() if hasattr(x, "to_array") else x, dtype=float)
    f = RHS(params, mu_0, zz)
    return finite_difference_jacobian(
        f, x, h, guard=functools.partial(_governor_piece, params=params, mu_0=mu_0, z=zz)
    )


@dataclass(frozen=True)
class EntryFlag:
    i: int
    k: int
    analytic: float
    numeric: float
    rel_error: float


def compare_jacobians(analytic: np.ndarray, numeric: np.ndarray, rtol: float = 1e-5):
    """Entries whose relative discrepancy exceeds ``rtol``.

    The relative error of an entry is ``|a - n| / max(|a|, |n|)``; entries
    where both values are below ``1e-12 * max|numeric|`` count as zero.
    Indices in the returned flags are 1-based ``(row, column)``.

    Returns
    -------
    max_rel : float
    flags : list of EntryFlag
    """
    floor = 1e-12 * np.abs(numeric).max()
    max_rel = 0.0
    flags = []
    for i in range(analytic.shape[0]):
        for k in range(analytic.shape[1]):
            a, n = analytic[i, k], numeric[i, k]
            den = max(abs(a), abs(n))
            if den <= floor:
                continue
            rel = abs(a - n) / den
            max_rel = max(max_rel, float(rel))
            if rel > rtol:
                flags.append(EntryFlag(i + 1, k + 1, float(a), float(n), float(rel)))
    return max_rel, flags


# --- characteristic polynomial and classifiers ------------------------------

def balance(J: np.ndarray) -> np.ndarray:
    """Diagonal similarity scaling that equalises row and column norms."""
    B, _ = matrix_balance(np.asarray(J, dtype=float), permute=False)
    return B


def characteristic_polynomial(J: np.ndarray) -> np.ndarray:
    """Coefficients of ``det(lambda I - J)``, highest degree first (monic).

    The matrix is balanced and divided by its largest entry before the
    Faddeev-LeVerrier recurrence, and the coefficients are scaled back
    afterwards.

    Raises
    ------
    OverflowRiskError
        If the balanced matrix has non-finite entries or its scale would
        overflow the back-scaling.
    """
    J = np.asarray(J, dtype=float)
    n = J.shape[0]
    if not np.all(np.isfinite(J)):
        raise OverflowRiskError("Jacobian has non-finite entries")
    B = balance(J)
    alpha = float(np.abs(B).max())
    if alpha == 0.0:
        out = np.zeros(n + 1)
        out[0] = 1.0
        return out
    if alpha > 1e30 or alpha < 1e-30:
        raise OverflowRiskError(f"balanced matrix scale {alpha:.3e} outside safe range")
    A = B / alpha
    c = np.zeros(n + 1)
    c[0] = 1.0
    M = np.zeros((n, n))
    eye = np.eye(n)
    for k in range(1, n + 1):
        M = A @ M + c[k - 1] * eye
        c[k] = -np.trace(A @ M) / k
    return c * alpha ** np.arange(n + 1)


def _verdict_from(first_col: np.ndarray, tol: float) -> str:
    if np.all(first_col > tol):
        return "stable"
    if np.any(first_col < -tol):
        return "unstable"
    return "marginal"


def routh_array(coeffs, tol: float = 1e-9):
    """Routh array of a polynomial after root-scale normalisation.

    The polynomial is rescaled (``lambda = rho * nu``, with ``rho`` the
    geometric mean of the root moduli) so that its roots have modulus of
    order one, then divided by its largest coefficient.
    A near-zero pivot in an otherwise nonzero row is replaced by ``+tol``
    (the epsilon convention).  An all-zero row stops the construction; it
    signals roots placed symmetrically about the origin.

    Returns
    -------
    first_column : ndarray
    zero_row : bool
    """
    a = np.asarray(coeffs, dtype=float)
    a = a / a[0]
    n = a.size - 1
    if a[n] != 0:
        # geometric mean of the root moduli
        rho = abs(a[n]) ** (1.0 / n)
    else:
        nz = [abs(a[k]) ** (1.0 / k) for k in range(1, n + 1) if a[k] != 0]
        rho = max(nz) if nz else 1.0
    a = a / rho ** np.arange(n + 1)
    a = a / np.abs(a).max()
    width = n // 2 + 1
    rows = [np.zeros(width), np.zeros(width)]
    rows[0][: len(a[0::2])] = a[0::2]
    rows[1][: len(a[1::2])] = a[1::2]
    first = [rows[0][0]]
    zero_row = False
    for _ in range(n):
        prev, cur = rows[-2], rows[-1]
        if np.all(np.abs(cur) <= tol):
            zero_row = True
            break
        if abs(cur[0]) <= tol:
            cur = cur.copy()
            cur[0] = tol
            rows[-1] = cur
        first.append(cur[0])
        if len(first) == n + 1:
            break
        nxt = np.zeros(width)
        for j in range(width - 1):
            nxt[j] = (cur[0] * prev[j + 1] - prev[0] * cur[j + 1]) / cur[0]
        rows.append(nxt)
    return np.array(first), zero_row


@dataclass(frozen=True)
class StabilityVerdict:
    method: str
    stable: str
    margin: float
    gamma: float = math.nan
    branch: int = -1
    theta: float = math.nan
    norm: float = math.nan


def routh_hurwitz(coeffs, tol: float = 1e-9) -> StabilityVerdict:
    """Classify a monic polynomial by its Routh array.

    ``stable`` when every first-column entry exceeds ``tol``, ``unstable``
    when any is below ``-tol``, ``marginal`` otherwise (including an
    all-zero row with no sign change before it).  The margin is the
    smallest first-column entry of the normalised array.
    """
    first, zero_row = routh_array(coeffs, tol)
    verdict = _verdict_from(first, tol)
    if zero_row and verdict == "stable":
        verdict = "marginal"
    margin = float(first.min()) if not zero_row or verdict == "unstable" else 0.0
    return StabilityVerdict("routh_hurwitz", verdict, margin)


def eigen_bound(J: np.ndarray) -> float:
    """Largest real part of the spectrum of ``J`` (balanced LAPACK ``geev``).

    Raises
    ------
    NumericError
        If the eigensolver fails to converge.
    """
    try:
        ev = np.linalg.eigvals(balance(J))
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigenvalue iteration failed: {exc}") from None
    return float(ev.real.max())


def classify(J: np.ndarray, rtol: float = 1e-9, marginal_rtol: float = 1e-9) -> dict:
    """Both verdicts for one Jacobian, plus the balanced 2-norm used to scale them."""
    norm = float(np.linalg.norm(balance(J), 2))
    rh = routh_hurwitz(characteristic_polynomial(J), rtol)
    m = eigen_bound(J)
    band = marginal_rtol * norm
    eig = "stable" if m < -band else ("unstable" if m > band else "marginal")
    return {
        "routh_hurwitz": StabilityVerdict("routh_hurwitz", rh.stable, rh.margin, norm=norm),
        "eigen_bound": StabilityVerdict("eigen_bound", eig, m, norm=norm),
    }


# --- sweeps -------------------------------------------------------------------

@dataclass
class SweepResult:
    verdicts: list
    windows: dict
    failures: list = field(default_factory=list)
    operating: dict = field(default_factory=dict)


def _classify_eq(eq: Equilibrium, params: UnitParams, governor: str) -> dict:
    J = analytic_jacobian(eq, params, "consistent", governor)
    out = classify(J, params.numerics.routh_rtol, params.numerics.marginal_rtol)
    return {
        m: StabilityVerdict(m, v.stable, v.margin, eq.gamma, eq.theta_branch, eq.theta, v.norm)
        for m, v in out.items()
    }


def _sweep_point(gamma: float, params: UnitParams, governor: str):
    try:
        eqs, op = equilibria_at(gamma, params)
        return [(eq.theta_branch == op, _classify_eq(eq, params, governor)) for eq in eqs], None
    except HydroUnitError as exc:
        return [], f"gamma={gamma}: {exc}"


def _operating_verdicts(gamma: float, params: UnitParams, governor: str) -> dict | None:
    try:
        eq = operating_equilibrium(gamma, params)
    except HydroUnitError:
        return None
    return _classify_eq(eq, params, governor)


def _is_unstable(v: StabilityVerdict) -> bool:
    return v.stable == "unstable"


def _bisect_edge(lo, hi, unstable_at_hi, params, governor, method, resolution):
    """Shrink ``[lo, hi]`` around a stability change of the operating branch."""
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        v = _operating_verdicts(mid, params, governor)
        if v is None:
            break
        if _is_unstable(v[method]) == unstable_at_hi:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def stability_sweep(
    gamma_grid,
    params: UnitParams,
    governor: str = "linearized",
    jobs: int = 1,
    refine: bool = True,
) -> SweepResult:
    """Classify every equilibrium branch along a voltage grid.

    For each method the instability window of the operating branch is
    reported with its endpoints refined by bisection to
    ``params.numerics.window_resolution``; a non-contiguous unstable set is
    reported through ``contiguous = False`` rather than raised.
    """
    grid = [float(g) for g in gamma_grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("gamma grid must be strictly ascending")
    results = parallel_map(
        functools.partial(_sweep_point, params=params, governor=governor), grid, jobs
    )
    verdicts, failures, operating = [], [], {m: [] for m in METHODS}
    for gamma, (points, err) in zip(grid, results):
        if err:
            failures.append(err)
        for is_op, per_method in points:
            for m in METHODS:
                verdicts.append(per_method[m])
                if is_op:
                    operating[m].append(per_method[m])
    windows = {}
    res = params.numerics.window_resolution
    for m in METHODS:
        ops = operating[m]
        flags = [_is_unstable(v) for v in ops]
        idx = [i for i, f in enumerate(flags) if f]
        info = {
            "gamma_1": None, "gamma_2": None, "contiguous": True,
            "unstable_points": [ops[i].gamma for i in idx],
        }
        if idx:
            info["contiguous"] = idx == list(range(idx[0], idx[-1] + 1))
            i0, i1 = idx[0], idx[-1]
            g1, g2 = ops[i0].gamma, ops[i1].gamma
            if refine and i0 > 0:
                g1 = _bisect_edge(ops[i0 - 1].gamma, ops[i0].gamma, True, params, governor, m, res)
            if refine and i1 < len(ops) - 1:
                g2 = _bisect_edge(ops[i1].gamma, ops[i1 + 1].gamma, False, params, governor, m, res)
            info["gamma_1"], info["gamma_2"] = g1, g2
            info["open_low"], info["open_high"] = i0 == 0, i1 == len(ops) - 1
        windows[m] = info
    return SweepResult(verdicts, windows, failures, operating)


VERDICT_COLUMNS = ("gamma", "branch", "theta", "method", "stable", "margin")


def verdict_rows(result: SweepResult):
    return [(v.gamma, v.branch, v.theta, v.method, v.stable, v.margin) for v in result.verdicts]
