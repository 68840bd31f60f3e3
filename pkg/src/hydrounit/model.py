"""State vector, algebraic sub-maps and the right-hand side of the unit model.

The nine states are, in order::

    theta_delta, s, Q, psi_d, psi_q, psi_r, psi_rd, psi_rq, mu_delta

Currents and EMFs are not states; they follow from the five linear
flux-linkage relations

    psi_d  = x_d i_d + E_q + E_rq
    psi_r  = a3 i_d + E_q + a4 E_rq
    psi_rd = a5 i_d + a6 E_q + (1 + a6) E_rq
    psi_q  = x_q i_q - E_rd
    psi_rq = a7 i_q - (1 + x_aq/x_rq) E_rd

with ``a3 = x_ad^2/x_r``, ``a4 = x_ad/x_r``, ``a5 = x_ad^2/x_rd``,
``a6 = x_ad/x_rd`` and ``a7 = x_aq^2/x_rq``.  :func:`flux_inverse` solves
them directly as a 3x3 d-axis block and a 2x2 q-axis block.  The reference
closed-form coefficients (:func:`inversion_coefficients`) are kept as a
cross-check path; they do not invert the relations above, and
:func:`compare_inversion_paths` quantifies by how much.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernel
from .errors import DomainError, ParameterError, SingularSystemError
from .params import DerivedElectricalParams, GeneratorRatings, GovernorParams, UnitParams

STATE_NAMES = (
    "theta_delta", "s", "Q", "psi_d", "psi_q", "psi_r", "psi_rd", "psi_rq", "mu_delta",
)
IDX = {name: i for i, name in enumerate(STATE_NAMES)}


@dataclass(frozen=True)
class State:
    theta_delta: float
    s: float
    Q: float
    psi_d: float
    psi_q: float
    psi_r: float
    psi_rd: float
    psi_rq: float
    mu_delta: float

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in STATE_NAMES], dtype=float)

    @classmethod
    def from_array(cls, x) -> State:
        x = np.asarray(x, dtype=float)
        if x.shape != (9,):
            raise ValueError(f"state vector must have shape (9,), got {x.shape}")
        return cls(*(float(v) for v in x))


@dataclass(frozen=True)
class ElectricalSolution:
    """Algebraic outputs at one instant.

    ``M_G_pu`` and ``P`` are ``None`` when the inputs needed to form them were
    not supplied.
    """

    i_d: float
    i_q: float
    E_q: float
    E_rd: float
    E_rq: float
    M_G_pu: float | None = None
    P: float | None = None


# --- governor nonlinearities ----------------------------------------------

def deadband(s: float, gov: GovernorParams) -> float:
    """Speed-error signal ``sigma * chi_s(s)`` with a symmetric deadband of width ``z``."""
    return float(_kernel.deadband(float(s), gov.sigma, gov.z))


def rate_limit(eta: float, gov: GovernorParams) -> float:
    return float(_kernel.clamp(float(eta), gov.rho_o, gov.rho_c))


def vane_saturation(mu_delta: float, mu_0: float, gov: GovernorParams) -> float:
    """Deviation ``mu_delta`` after clamping ``mu_0 + mu_delta`` to the vane stops."""
    return float(_kernel.vane_saturation(float(mu_delta), float(mu_0), gov.mu_min, gov.mu_max))


def stop_logic(mu_delta: float, mu_0: float, rate_cmd: float, gov: GovernorParams) -> float:
    """Part of ``rate_cmd`` that would push the vanes further past a stop."""
    return float(
        _kernel.stop_logic(float(mu_delta), float(mu_0), float(rate_cmd), gov.mu_min, gov.mu_max)
    )


def governor_rate(s: float, mu_delta: float, mu_0: float, gov: GovernorParams) -> float:
    """Servomotor velocity: deadband, vane feedback, rate clamp, stop logic, ``/T_c``."""
    return float(
        _kernel.governor_rate(
            float(s), float(mu_delta), float(mu_0), gov.sigma, gov.z, gov.T_c,
            gov.rho_o, gov.rho_c, gov.mu_min, gov.mu_max,
        )
    )


# --- flux-linkage algebra -------------------------------------------------

@dataclass(frozen=True)
class InversionCoefficients:
    a1: float
    a2: float
    a3: float
    a4: float
    a5: float
    a6: float
    a7: float
    b1: float
    X_d: float
    X_r: float
    X_rd: float
    Y_q: float
    Y_rq: float
    Z_d: float
    Z_r: float
    Z_rd: float
    P_q: float
    P_rq: float
    Q_d: float
    Q_r: float
    Q_rd: float


def inversion_coefficients(
    der: DerivedElectricalParams, gen: GeneratorRatings
) -> InversionCoefficients:
    """Closed-form inversion coefficients exactly as given in the reference expressions.

    Raises
    ------
    ParameterError
        If one of the division guards (``b1 != 0``, ``a2 != a7``,
        ``a4 != 1``, ``a6 != 1``) fails.
    """
    a1 = gen.x_d
    a2 = gen.x_q
    a3 = der.x_ad**2 / der.x_r
    a4 = der.x_ad / der.x_r
    a5 = der.x_ad**2 / der.x_rd
    a6 = der.x_ad / der.x_rd
    a7 = der.x_aq**2 / der.x_rq
    b1 = (a1 - a5) * (a4 - 1) - (a1 * a4 - a3) * (1 - a6)
    if b1 == 0:
        raise ParameterError("der", "degenerate inversion: b1 = 0")
    if a2 == a7:
        raise ParameterError("der.x_rq", "degenerate inversion: a2 = a7")
    if a4 == 1:
        raise ParameterError("der.x_r", "degenerate inversion: a4 = 1")
    if a6 == 1:
        raise ParameterError("der.x_rd", "degenerate inversion: a6 = 1")
    return InversionCoefficients(
        a1=a1, a2=a2, a3=a3, a4=a4, a5=a5, a6=a6, a7=a7, b1=b1,
        X_d=(a4 * a6 - 1) / b1,
        X_r=(a6 - 1) / b1,
        X_rd=(1 - a4) / b1,
        Y_q=1 / (a2 - a7),
        Y_rq=1 / (a2 - a7),
        Z_d=(b1 - (a1 - a5) * (a4 * a6 - 1)) / (b1 * (1 - a6)),
        Z_r=(a5 - a1) / b1,
        Z_rd=(b1 + (a1 - a5) * (1 - a4)) / (b1 * (1 - a6)),
        P_q=a7 / (a2 - a7),
        P_rq=a2 / (a2 - a7),
        Q_d=((a1 - a3) * (a4 * a6 - 1) - b1) / (b1 * (1 - a4)),
        Q_r=((a1 - a3) * (a6 - 1) - b1) / (b1 * (1 - a4)),
        Q_rd=(a3 - a1) / b1,
    )


def flux_matrices(gen: GeneratorRatings, der: DerivedElectricalParams):
    """Coefficient matrices of the flux relations.

    Returns
    -------
    Md : ndarray (3, 3)
        Maps ``(i_d, E_q, E_rq)`` to ``(psi_d, psi_r, psi_rd)``.
    Mq : ndarray (2, 2)
        Maps ``(i_q, E_rd)`` to ``(psi_q, psi_rq)``.
    """
    a3 = der.x_ad**2 / der.x_r
    a4 = der.x_ad / der.x_r
    a5 = der.x_ad**2 / der.x_rd
    a6 = der.x_ad / der.x_rd
    a7 = der.x_aq**2 / der.x_rq
    Md = np.array([[gen.x_d, 1.0, 1.0], [a3, 1.0, a4], [a5, a6, 1.0 + a6]])
    Mq = np.array([[gen.x_q, -1.0], [a7, -(1.0 + der.x_aq / der.x_rq)]])
    return Md, Mq


def inverse_matrices(params: UnitParams):
    """Inverses of :func:`flux_matrices` after a conditioning check."""
    Md, Mq = flux_matrices(params.gen, params.der)
    limit = params.numerics.cond_threshold
    for name, M in (("d-axis", Md), ("q-axis", Mq)):
        cond = np.linalg.cond(M)
        if not np.isfinite(cond) or cond > limit:
            raise SingularSystemError(
                f"{name} flux block is numerically singular (cond={cond:.3e} > {limit:.1e})"
            )
    return np.linalg.inv(Md), np.linalg.inv(Mq)


def flux_inverse(
    psi_d: float,
    psi_q: float,
    psi_r: float,
    psi_rd: float,
    psi_rq: float,
    params: UnitParams,
    theta: float | None = None,
) -> ElectricalSolution:
    """Solve the flux relations for currents and EMFs.

    Parameters
    ----------
    psi_d, psi_q, psi_r, psi_rd, psi_rq : float
        Flux linkages [p.u.].
    params : UnitParams
    theta : float, optional
        Absolute rotor angle ``theta0 + theta_delta``.  When given, the
        instantaneous power at ``params.U`` is filled in.

    Raises
    ------
    SingularSystemError
        If either block's condition number exceeds the configured threshold.
    """
    Mdi, Mqi = inverse_matrices(params)
    i_d, E_q, E_rq = Mdi @ np.array([psi_d, psi_r, psi_rd], dtype=float)
    i_q, E_rd = Mqi @ np.array([psi_q, psi_rq], dtype=float)
    m_g = generator_torque_pu(psi_d, psi_q, i_d, i_q)
    power = None if theta is None else instantaneous_power(i_d, i_q, params.U, theta)
    return ElectricalSolution(
        i_d=float(i_d), i_q=float(i_q), E_q=float(E_q), E_rd=float(E_rd),
        E_rq=float(E_rq), M_G_pu=float(m_g), P=power,
    )


def closed_form_inverse(psi, coeffs: InversionCoefficients) -> np.ndarray:
    """Currents/EMFs ``(i_d, i_q, E_q, E_rd, E_rq)`` from the reference coefficients.

    ``psi`` is ``(psi_d, psi_q, psi_r, psi_rd, psi_rq)``.
    """
    psi_d, psi_q, psi_r, psi_rd, psi_rq = psi
    c = coeffs
    return np.array([
        c.X_d * psi_d - c.X_r * psi_r + c.X_rd * psi_rd,
        c.Y_q * psi_q - c.Y_rq * psi_rq,
        c.Z_d * psi_d + c.Z_r * psi_r - c.Z_rd * psi_rd,
        c.P_q * psi_q - c.P_rq * psi_rq,
        -c.Q_d * psi_d + c.Q_r * psi_r + c.Q_rd * psi_rd,
    ])


def flux_forward(i_d, i_q, E_q, E_rd, E_rq, params: UnitParams) -> np.ndarray:
    """Fluxes ``(psi_d, psi_q, psi_r, psi_rd, psi_rq)`` from currents and EMFs."""
    Md, Mq = flux_matrices(params.gen, params.der)
    d = Md @ np.array([i_d, E_q, E_rq], dtype=float)
    q = Mq @ np.array([i_q, E_rd], dtype=float)
    return np.array([d[0], q[0], d[1], d[2], q[1]])


def compare_inversion_paths(
    params: UnitParams, n: int = 1000, seed: int = 0, tol: float = 1e-9
) -> dict:
    """Compare the reference closed-form coefficients with the linear solve.

    Returns a report with the worst absolute discrepancy per output and the
    list of outputs exceeding ``tol``.
    """
    rng = np.random.default_rng(seed)
    coeffs = inversion_coefficients(params.der, params.gen)
    Mdi, Mqi = inverse_matrices(params)
    names = ("i_d", "i_q", "E_q", "E_rd", "E_rq")
    worst = np.zeros(5)
    for psi in rng.uniform(-2.0, 2.0, size=(n, 5)):
        d = Mdi @ psi[[0, 2, 3]]
        q = Mqi @ psi[[1, 4]]
        exact = np.array([d[0], q[0], d[1], q[1], d[2]])
        worst = np.maximum(worst, np.abs(closed_form_inverse(psi, coeffs) - exact))
    return {
        "max_abs_diff": dict(zip(names, worst.tolist())),
        "disagreeing": [nm for nm, w in zip(names, worst) if w > tol],
        "tol": tol,
        "samples": n,
    }


# --- torques and power ------------------------------------------------------

def generator_torque_pu(psi_d: float, psi_q: float, i_d: float, i_q: float) -> float:
    return psi_d * i_q - psi_q * i_d


def turbine_torque_pu(Q: float, mu: float, s: float, params: UnitParams) -> float:
    """Turbine torque ``k Q^3 / (C^2 mu^2 omega0^2 (1+s))`` [p.u.].

    Raises
    ------
    DomainError
        If ``mu <= 0`` or ``s <= -1``.
    """
    if not mu > 0:
        raise DomainError(f"vane opening must be positive, got mu={mu}")
    if not 1 + s > 0:
        raise DomainError(f"rotor speed must be positive, got s={s}")
    tur = params.tur
    w0 = params.gen.omega0
    return tur.k / (tur.C**2 * mu**2) * Q**3 / (w0**2 * (1 + s))


def instantaneous_power(i_d: float, i_q: float, U: float, theta: float) -> float:
    """Instantaneous power with the reference sign convention.

    Note that with this convention a generator delivering power to the grid
    yields a negative value.
    """
    return -1.5 * (i_d * U * math.sin(theta) + i_q * U * math.cos(theta))


# --- full right-hand side ---------------------------------------------------

def pack_params(params: UnitParams, mu_0: float, z: float | None = None) -> np.ndarray:
    """Flat parameter vector for the compiled kernel.

    ``z`` overrides the deadband width (``z=0`` gives the smooth governor
    used for finite-difference checks).
    """
    g, d, t, gv = params.gen, params.der, params.tur, params.gov
    pv = np.empty(_kernel.N_PARAMS)
    pv[_kernel.P_OMEGA0] = g.omega0
    pv[_kernel.P_R] = g.r
    pv[_kernel.P_TJ] = d.T_J
    pv[_kernel.P_K] = t.k
    pv[_kernel.P_C] = t.C
    pv[_kernel.P_SL] = t.S_area / (t.l * t.rho_w)
    pv[_kernel.P_DP] = t.head
    pv[_kernel.P_U] = params.U
    pv[_kernel.P_THETA0] = g.theta0
    pv[_kernel.P_ER] = g.E_r
    pv[_kernel.P_TR] = g.T_r
    pv[_kernel.P_TRD] = d.T_rd
    pv[_kernel.P_TRQ] = d.T_rq
    pv[_kernel.P_SIGMA] = gv.sigma
    pv[_kernel.P_Z] = gv.z if z is None else z
    pv[_kernel.P_TC] = gv.T_c
    pv[_kernel.P_RHO_O] = gv.rho_o
    pv[_kernel.P_RHO_C] = gv.rho_c
    pv[_kernel.P_MU_MIN] = gv.mu_min
    pv[_kernel.P_MU_MAX] = gv.mu_max
    pv[_kernel.P_MU0] = mu_0
    return pv


class RHS:
    """Callable right-hand side bound to one parameter set and ``mu_0``.

    Precomputes the packed parameters and inverse flux matrices so repeated
    evaluations (Newton steps, finite differences) are cheap.
    """

    def __init__(self, params: UnitParams, mu_0: float, z: float | None = None):
        self.params = params
        self.mu_0 = float(mu_0)
        self.pv = pack_params(params, mu_0, z)
        self.Mdi, self.Mqi = inverse_matrices(params)

    def __call__(self, x) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=float)
        out = np.empty(9)
        if not _kernel.rhs_into(x, self.pv, self.Mdi, self.Mqi, out):
            raise DomainError(
                f"rhs undefined at s={float(x[1])!r}, mu={float(self.mu_0 + x[8])!r} (need s > -1, mu > 0)"
            )
        return out


def rhs(x, params: UnitParams, mu_0: float) -> np.ndarray:
    """Time derivative of the state vector.

    Parameters
    ----------
    x : State or array_like, shape (9,)
    params : UnitParams
        Supplies the applied voltage through ``params.gamma``.
    mu_0 : float
        Vane opening of the operating point about which ``mu_delta`` is measured.

    Returns
    -------
    ndarray, shape (9,)
    """
    if isinstance(x, State):
        x = x.to_array()
    return RHS(params, mu_0)(x)
