"""Compiled right-hand side and fixed-step RK4 loop.

Everything here operates on flat float arrays so numba can compile it.  The
parameter vector layout is produced by :func:`pack_params` and must be kept in
sync with the ``P_*`` index constants below.  Public code should go through
:mod:`hydrounit.model` and :mod:`hydrounit.transient` instead.
"""
from __future__ import annotations

import numba
import numpy as np

(
    P_OMEGA0, P_R, P_TJ, P_K, P_C, P_SL, P_DP, P_U, P_THETA0, P_ER,
    P_TR, P_TRD, P_TRQ, P_SIGMA, P_Z, P_TC, P_RHO_O, P_RHO_C, P_MU_MIN,
    P_MU_MAX, P_MU0,
) = range(21)
N_PARAMS = 21
N_STATE = 9

# integrator status codes
OK = 0
DIVERGED = 1
DOMAIN = 2

# event kinds
EV_STOP_HIT = 0
EV_STOP_RELEASE = 1
EV_DEADBAND_CROSS = 2

BLOWUP = 1e9


@numba.njit(cache=True)
def deadband(s, sigma, z):
    h = 0.5 * z
    if s >= h:
        return sigma * (s - h)
    if s <= -h:
        return sigma * (s + h)
    return 0.0


@numba.njit(cache=True)
def clamp(v, lo, hi):
    return min(max(v, lo), hi)


@numba.njit(cache=True)
def vane_saturation(mu_delta, mu0, mu_min, mu_max):
    return clamp(mu0 + mu_delta, mu_min, mu_max) - mu0


@numba.njit(cache=True)
def stop_logic(mu_delta, mu0, rate_cmd, mu_min, mu_max):
    mu = mu0 + mu_delta
    if (mu < mu_min and rate_cmd < 0.0) or (mu > mu_max and rate_cmd > 0.0):
        return rate_cmd
    return 0.0


@numba.njit(cache=True)
def governor_rate(s, mu_delta, mu0, sigma, z, T_c, rho_o, rho_c, mu_min, mu_max):
    eta = -deadband(s, sigma, z) - vane_saturation(mu_delta, mu0, mu_min, mu_max)
    rate = clamp(eta, rho_o, rho_c)
    return (rate - stop_logic(mu_delta, mu0, rate, mu_min, mu_max)) / T_c


@numba.njit(cache=True)
def rhs_into(x, pv, Mdi, Mqi, out):
    """Evaluate the nine derivatives into ``out``; returns False on a domain fault."""
    w0 = pv[P_OMEGA0]
    s = x[1]
    Q = x[2]
    psi_d = x[3]
    psi_q = x[4]
    mu = pv[P_MU0] + x[8]
    if mu <= 0.0 or 1.0 + s <= 0.0:
        return False
    i_d = Mdi[0, 0] * psi_d + Mdi[0, 1] * x[5] + Mdi[0, 2] * x[6]
    E_q = Mdi[1, 0] * psi_d + Mdi[1, 1] * x[5] + Mdi[1, 2] * x[6]
    E_rq = Mdi[2, 0] * psi_d + Mdi[2, 1] * x[5] + Mdi[2, 2] * x[6]
    i_q = Mqi[0, 0] * psi_q + Mqi[0, 1] * x[7]
    E_rd = Mqi[1, 0] * psi_q + Mqi[1, 1] * x[7]
    cmu2 = pv[P_C] * pv[P_C] * mu * mu
    m_t = pv[P_K] / cmu2 * Q * Q * Q / (w0 * w0 * (1.0 + s))
    ang = pv[P_THETA0] + x[0]
    U = pv[P_U]
    out[0] = w0 * s
    out[1] = (m_t - psi_d * i_q + psi_q * i_d) / pv[P_TJ]
    out[2] = pv[P_SL] * (pv[P_DP] - Q * Q / cmu2)
    out[3] = -w0 * (1.0 + s) * psi_q - w0 * pv[P_R] * i_d + w0 * U * np.sin(ang)
    out[4] = w0 * (1.0 + s) * psi_d - w0 * pv[P_R] * i_q - w0 * U * np.cos(ang)
    out[5] = (pv[P_ER] - E_q) / pv[P_TR]
    out[6] = -E_rq / pv[P_TRD]
    out[7] = E_rd / pv[P_TRQ]
    out[8] = governor_rate(
        s, x[8], pv[P_MU0], pv[P_SIGMA], pv[P_Z], pv[P_TC],
        pv[P_RHO_O], pv[P_RHO_C], pv[P_MU_MIN], pv[P_MU_MAX],
    )
    return True


@numba.njit(cache=True)
def _at_stop(mu_delta, lo, hi):
    return mu_delta <= lo or mu_delta >= hi


@numba.njit(cache=True)
def rk4_integrate(x0, pv, Mdi, Mqi, dt, n_steps, stride, do_clamp, ev_t, ev_k):
    """Classical RK4 with optional post-step clamping of the vane deviation.

    Returns
    -------
    rec : ndarray, shape (n_steps // stride + 1, 9)
        Recorded states; only the first ``n_rec`` rows are valid.
    n_rec, n_ev : int
        Valid record rows and events written (events beyond the buffer are
        counted but dropped).
    status : int
        ``OK``, ``DIVERGED`` or ``DOMAIN``.
    fail_step : int
        Step index at which integration stopped (``n_steps`` on success).
    """
    n = N_STATE
    x = x0.copy()
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    rec = np.empty((n_steps // stride + 1, n))
    cap = ev_t.shape[0]
    n_ev = 0
    lo = pv[P_MU_MIN] - pv[P_MU0]
    hi = pv[P_MU_MAX] - pv[P_MU0]
    half_z = 0.5 * pv[P_Z]
    if do_clamp:
        c = clamp(x[8], lo, hi)
        if c != x[8]:
            if n_ev < cap:
                ev_t[n_ev] = 0.0
                ev_k[n_ev] = EV_STOP_HIT
            n_ev += 1
        x[8] = c
    rec[0] = x
    n_rec = 1
    stopped = _at_stop(x[8], lo, hi)
    in_band = abs(x[1]) < half_z
    for i in range(1, n_steps + 1):
        if not rhs_into(x, pv, Mdi, Mqi, k1):
            return rec, n_rec, n_ev, DOMAIN, i
        for a in range(n):
            tmp[a] = x[a] + 0.5 * dt * k1[a]
        if not rhs_into(tmp, pv, Mdi, Mqi, k2):
            return rec, n_rec, n_ev, DOMAIN, i
        for a in range(n):
            tmp[a] = x[a] + 0.5 * dt * k2[a]
        if not rhs_into(tmp, pv, Mdi, Mqi, k3):
            return rec, n_rec, n_ev, DOMAIN, i
        for a in range(n):
            tmp[a] = x[a] + dt * k3[a]
        if not rhs_into(tmp, pv, Mdi, Mqi, k4):
            return rec, n_rec, n_ev, DOMAIN, i
        for a in range(n):
            x[a] += dt / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a])
        if do_clamp:
            x[8] = clamp(x[8], lo, hi)
        for a in range(n):
            if not np.isfinite(x[a]) or abs(x[a]) > BLOWUP:
                return rec, n_rec, n_ev, DIVERGED, i
        t = i * dt
        now_stopped = _at_stop(x[8], lo, hi)
        if now_stopped != stopped:
            if n_ev < cap:
                ev_t[n_ev] = t
                ev_k[n_ev] = EV_STOP_HIT if now_stopped else EV_STOP_RELEASE
            n_ev += 1
            stopped = now_stopped
        now_in_band = abs(x[1]) < half_z
        if now_in_band != in_band:
            if n_ev < cap:
                ev_t[n_ev] = t
                ev_k[n_ev] = EV_DEADBAND_CROSS
            n_ev += 1
            in_band = now_in_band
        if i % stride == 0:
            rec[n_rec] = x
            n_rec += 1
    return rec, n_rec, n_ev, OK, n_steps
