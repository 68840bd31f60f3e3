"""Parameter sets for the hydropower unit model.

Generator ratings, derived electrical constants, penstock/turbine data and
governor settings are kept in separate frozen dataclasses and combined into
:class:`UnitParams`.  All invariants are checked at construction time and a
violation raises :class:`ParameterError` carrying the offending key path
(for example ``gen.x_d``), so config files can be debugged quickly.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, fields, replace

from .errors import ParameterError

__all__ = [
    "ParameterError",
    "GeneratorRatings",
    "DerivedElectricalParams",
    "TurbineParams",
    "GovernorParams",
    "NumericsConfig",
    "UnitParams",
    "derive_params",
    "damper_resistances_from_formulas",
]


def _check(cond: bool, key: str, message: str) -> None:
    if not cond:
        raise ParameterError(key, message)


def _finite(obj, prefix: str) -> None:
    for f in fields(obj):
        value = getattr(obj, f.name)
        if isinstance(value, float | int) and not isinstance(value, bool):
            _check(math.isfinite(value), f"{prefix}.{f.name}", "must be finite")


@dataclass(frozen=True)
class GeneratorRatings:
    """Synchronous generator data (reactances in p.u., times in s).

    ``U_nom`` is the rated stator voltage in volts.  The machine equations
    use it directly as the per-unit forcing amplitude, which is why ``E_r``
    and ``S_b`` are calibration values rather than nameplate data.
    """

    omega0: float = 2 * math.pi * 142.8 / 60
    r: float = 0.0034
    x_s: float = 0.184
    x_d: float = 1.58
    x_q: float = 0.97
    x_d_prime: float = 0.43
    x_d_dprime: float = 0.3
    x_q_dprime: float = 0.31
    T_r: float = 8.21
    T_d_dprime: float = 0.143
    J: float = 25.5e6
    E_r: float = 960.0
    U_nom: float = 15.75e3
    theta0: float = math.acos(0.9)
    S_b: float = 450.0

    def validate(self, prefix: str = "gen") -> None:
        _finite(self, prefix)
        _check(self.omega0 > 0, f"{prefix}.omega0", "must be > 0")
        for name in ("r", "x_s", "x_d", "x_q", "x_d_prime", "x_d_dprime", "x_q_dprime"):
            _check(getattr(self, name) > 0, f"{prefix}.{name}", "must be > 0")
        _check(self.x_d > self.x_d_prime, f"{prefix}.x_d", "must exceed x_d_prime")
        _check(self.x_d > self.x_s, f"{prefix}.x_d", "must exceed x_s")
        _check(self.x_q > self.x_s, f"{prefix}.x_q", "must exceed x_s")
        _check(0.0 <= self.theta0 <= math.pi / 2, f"{prefix}.theta0", "must lie in [0, pi/2]")
        for name in ("T_r", "T_d_dprime", "J", "U_nom", "S_b"):
            _check(getattr(self, name) > 0, f"{prefix}.{name}", "must be > 0")


@dataclass(frozen=True)
class DerivedElectricalParams:
    x_ad: float
    x_aq: float
    x_r: float
    x_rd: float
    x_rq: float
    x_sr: float
    r_rd: float
    r_rq: float
    T_rd: float
    T_rq: float
    T_J: float

    def validate(self, prefix: str = "der") -> None:
        _finite(self, prefix)
        for f in fields(self):
            _check(getattr(self, f.name) > 0, f"{prefix}.{f.name}", "must be > 0")


@dataclass(frozen=True)
class TurbineParams:
    """Penstock and turbine constants.

    ``k`` is the per-unit torque constant (it already contains the
    ``1/(Psi_b I_b)`` normalisation).  ``C`` is the penstock constant used in
    ``Q = C mu sqrt(h)``.
    """

    S_area: float = math.pi / 4 * 7.5**2
    l: float = 192.0
    rho_w: float = 0.98e3
    p_u: float = 2.7e6
    p_l: float = 0.35e6
    C: float = 0.27
    k: float = 40.0
    Q_max: float = 358.0

    def validate(self, prefix: str = "tur") -> None:
        _finite(self, prefix)
        for f in fields(self):
            _check(getattr(self, f.name) > 0, f"{prefix}.{f.name}", "must be > 0")
        _check(self.p_u > self.p_l, f"{prefix}.p_u", "must exceed p_l")

    @property
    def head(self) -> float:
        """Pressure drop ``p_u - p_l`` [Pa]."""
        return self.p_u - self.p_l


@dataclass(frozen=True)
class GovernorParams:
    z: float = 0.002
    sigma: float = 0.36
    T_c: float = 0.59
    rho_o: float = -0.1
    rho_c: float = 0.1
    mu_min: float = 0.02
    mu_max: float = 1.0

    def validate(self, prefix: str = "gov") -> None:
        _finite(self, prefix)
        _check(self.z >= 0, f"{prefix}.z", "must be >= 0")
        _check(self.sigma >= 0, f"{prefix}.sigma", "must be >= 0")
        _check(self.T_c > 0, f"{prefix}.T_c", "must be > 0")
        _check(self.rho_o < 0, f"{prefix}.rho_o", "must be < 0")
        _check(self.rho_c > 0, f"{prefix}.rho_c", "must be > 0")
        _check(self.mu_min >= 0, f"{prefix}.mu_min", "must be >= 0")
        _check(self.mu_min < self.mu_max, f"{prefix}.mu_min", "must be < mu_max")


@dataclass(frozen=True)
class NumericsConfig:
    """Solver tolerances shared by the analysis modules."""

    residual_tol: float = 1e-8
    cond_threshold: float = 1e12
    theta_grid: int = 2048
    refine_max_iter: int = 50
    routh_rtol: float = 1e-9
    marginal_rtol: float = 1e-9
    window_resolution: float = 1e-3

    def validate(self, prefix: str = "numerics") -> None:
        _check(self.residual_tol > 0, f"{prefix}.residual_tol", "must be > 0")
        _check(self.cond_threshold > 1, f"{prefix}.cond_threshold", "must be > 1")
        _check(self.theta_grid >= 16, f"{prefix}.theta_grid", "must be >= 16")
        _check(self.refine_max_iter >= 1, f"{prefix}.refine_max_iter", "must be >= 1")
        _check(self.routh_rtol > 0, f"{prefix}.routh_rtol", "must be > 0")
        _check(self.marginal_rtol >= 0, f"{prefix}.marginal_rtol", "must be >= 0")
        _check(self.window_resolution > 0, f"{prefix}.window_resolution", "must be > 0")


def derive_params(
    gen: GeneratorRatings, r_rd: float = 0.1246, r_rq: float = 0.0823
) -> DerivedElectricalParams:
    """Compute the mutual/winding reactances and time constants.

    Parameters
    ----------
    gen : GeneratorRatings
        Nameplate data.
    r_rd, r_rq : float
        Damper winding resistances [p.u.].  The tabulated values are used by
        default; see :func:`damper_resistances_from_formulas` for the
        formula route.

    Returns
    -------
    DerivedElectricalParams

    Raises
    ------
    ParameterError
        If a denominator of the reactance formulas vanishes.
    """
    gen.validate()
    _check(r_rd > 0, "der.r_rd", "must be > 0")
    _check(r_rq > 0, "der.r_rq", "must be > 0")
    x_ad = gen.x_d - gen.x_s
    x_aq = gen.x_q - gen.x_s
    _check(gen.x_d != gen.x_d_prime, "gen.x_d_prime", "x_d - x_d_prime vanishes")
    x_r = x_ad**2 / (gen.x_d - gen.x_d_prime)
    x_sr = x_r - x_ad
    _check(gen.x_d_dprime != gen.x_s, "gen.x_d_dprime", "x_d_dprime - x_s vanishes")
    _check(gen.x_q_dprime != gen.x_s, "gen.x_q_dprime", "x_q_dprime - x_s vanishes")
    _check(x_sr != 0, "gen.x_d_prime", "x_sr vanishes")
    inv_d = 1.0 / (gen.x_d_dprime - gen.x_s) - 1.0 / x_ad - 1.0 / x_sr
    inv_q = 1.0 / (gen.x_q_dprime - gen.x_s) - 1.0 / x_aq
    _check(inv_d != 0, "gen.x_d_dprime", "reciprocal sum for x_rd vanishes")
    _check(inv_q != 0, "gen.x_q_dprime", "reciprocal sum for x_rq vanishes")
    x_rd = x_ad + 1.0 / inv_d
    x_rq = x_aq + 1.0 / inv_q
    T_rd = x_rd / (gen.omega0 * r_rd)
    T_rq = x_rq / (gen.omega0 * r_rq)
    T_J = gen.J * gen.omega0**2 / gen.S_b
    der = DerivedElectricalParams(
        x_ad=x_ad, x_aq=x_aq, x_r=x_r, x_rd=x_rd, x_rq=x_rq, x_sr=x_sr,
        r_rd=r_rd, r_rq=r_rq, T_rd=T_rd, T_rq=T_rq, T_J=T_J,
    )
    der.validate()
    return der


def damper_resistances_from_formulas(
    gen: GeneratorRatings, T_q_dprime: float | None = None
) -> tuple[float, float]:
    """Damper resistances from the sub-transient time constants.

    The tabulated 0.1246 / 0.0823 cannot be reproduced this way with the
    tabulated ratings; a ``RuntimeWarning`` says so whenever the results
    differ from them by more than 1 %.  ``T_q_dprime`` defaults to the d-axis
    value because no q-axis sub-transient time constant is tabulated.
    """
    T_q = gen.T_d_dprime if T_q_dprime is None else T_q_dprime
    base = derive_params(gen)
    r_rd = (base.x_rd * gen.x_d - base.x_ad**2) * base.x_rd / (
        gen.omega0 * gen.x_d * gen.x_d_prime * gen.T_d_dprime
    )
    r_rq = (base.x_rq * gen.x_q - base.x_aq**2) / (gen.omega0 * gen.x_q * T_q)
    if abs(r_rd / 0.1246 - 1) > 0.01 or abs(r_rq / 0.0823 - 1) > 0.01:
        warnings.warn(
            f"formula damper resistances r_rd={r_rd:.4f}, r_rq={r_rq:.4f} disagree "
            "with the tabulated 0.1246, 0.0823",
            RuntimeWarning,
            stacklevel=2,
        )
    return r_rd, r_rq


@dataclass(frozen=True)
class UnitParams:
    """Complete parameter set of one hydropower unit at voltage ``gamma*U_nom``."""

    gen: GeneratorRatings = field(default_factory=GeneratorRatings)
    der: DerivedElectricalParams | None = None
    tur: TurbineParams = field(default_factory=TurbineParams)
    gov: GovernorParams = field(default_factory=GovernorParams)
    gamma: float = 1.0
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    check_derived: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        self.gen.validate()
        self.tur.validate()
        self.gov.validate()
        self.numerics.validate()
        _check(math.isfinite(self.gamma) and self.gamma > 0, "gamma", "must be > 0")
        if self.der is None:
            object.__setattr__(self, "der", derive_params(self.gen))
            return
        self.der.validate()
        if not self.check_derived:
            return
        expected = derive_params(self.gen, self.der.r_rd, self.der.r_rq)
        for f in fields(expected):
            a, b = getattr(self.der, f.name), getattr(expected, f.name)
            _check(
                abs(a - b) <= 1e-9 * max(abs(b), 1e-300),
                f"der.{f.name}",
                f"inconsistent with generator ratings (expected {b!r}, got {a!r})",
            )

    @property
    def U(self) -> float:
        """Applied stator voltage ``gamma * U_nom``."""
        return self.gamma * self.gen.U_nom

    def with_gamma(self, gamma: float) -> UnitParams:
        return replace(self, gamma=float(gamma))

    def with_governor(self, **changes) -> UnitParams:
        return replace(self, gov=replace(self.gov, **changes))

    def to_dict(self) -> dict:
        return {
            "gen": asdict(self.gen),
            "der": {"r_rd": self.der.r_rd, "r_rq": self.der.r_rq},
            "tur": asdict(self.tur),
            "gov": asdict(self.gov),
            "gamma": self.gamma,
            "numerics": asdict(self.numerics),
        }
