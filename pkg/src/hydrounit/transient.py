"""Time-domain simulation and regime classification.

Integration is classical fixed-step RK4 (compiled in :mod:`hydrounit._kernel`)
with the vane deviation clamped to the servomotor stroke after every step.
A run is classified from its post-transient window as an equilibrium, a
limit cycle or unresolved.
"""
from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import find_peaks

from . import _kernel
from ._parallel import parallel_map
from .equilibria import operating_equilibrium, solve_mu0
from .errors import (
    ConfigError,
    DivergenceError,
    HydroUnitError,
    InsufficientDataError,
    ParameterError,
)
from .model import STATE_NAMES, State, inverse_matrices, pack_params
from .params import UnitParams

EVENT_KINDS = {
    _kernel.EV_STOP_HIT: "stop_hit",
    _kernel.EV_STOP_RELEASE: "stop_release",
    _kernel.EV_DEADBAND_CROSS: "deadband_cross",
}

RATED_X0 = (0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

SCENARIOS = {"rated": 1.0, "reduced_089": 0.89, "reduced_07": 0.7}
SCENARIO_CHAIN = ("rated", "reduced_089", "reduced_07")


@dataclass(frozen=True)
class IntegrationConfig:
    """Fixed-step integration and classification settings.

    Attributes
    ----------
    dt : float
        RK4 step [s].
    T_end, T_discard : float
        Horizon and length of the initial transient ignored by
        :func:`classify_regime` [s].
    record_stride : int
        Keep every ``record_stride``-th step.
    clamp_mu : bool
        Clamp ``mu_delta`` to the vane stops after each step.
    eq_tol, cycle_tol : float
        Equilibrium and limit-cycle amplitude thresholds.
    event_capacity : int
        Maximum number of boundary-crossing events stored per run.
    """

    dt: float = 2e-4
    T_end: float = 1000.0
    T_discard: float = 600.0
    record_stride: int = 50
    clamp_mu: bool = True
    eq_tol: float = 1e-6
    cycle_tol: float = 1e-4
    event_capacity: int = 100_000

    def __post_init__(self):
        if not 0 < self.dt <= 1e-3:
            raise ParameterError("integration.dt", "must satisfy 0 < dt <= 1e-3")
        if not 0 <= self.T_discard < self.T_end:
            raise ParameterError("integration.T_discard", "must satisfy 0 <= T_discard < T_end")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ParameterError("integration.record_stride", "must be an integer >= 1")
        if not self.eq_tol > 0:
            raise ParameterError("integration.eq_tol", "must be > 0")
        if not self.cycle_tol > 0:
            raise ParameterError("integration.cycle_tol", "must be > 0")
        if self.event_capacity < 0:
            raise ParameterError("integration.event_capacity", "must be >= 0")

    @property
    def n_steps(self) -> int:
        return int(round(self.T_end / self.dt))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Trajectory:
    """Decimated solution of one run.

    ``states[i]`` is the state at ``times[i]``; the same row layout as
    :data:`hydrounit.model.STATE_NAMES`.
    """

    times: np.ndarray
    states: np.ndarray
    events: list = field(default_factory=list)
    gamma: float = 1.0
    mu_0: float = 0.0
    dropped_events: int = 0

    def state(self, i: int) -> State:
        return State.from_array(self.states[i])

    @property
    def final_state(self) -> State:
        return self.state(-1)

    def column(self, name: str) -> np.ndarray:
        return self.states[:, STATE_NAMES.index(name)]


@dataclass
class RegimeReport:
    kind: str
    amplitude: dict
    period: float | None
    final_state: State
    gamma: float
    jitter: float | None = None
    n_peaks: int = 0
    note: str = ""

    @property
    def amplitude_s(self) -> float:
        return self.amplitude["s"]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "gamma": self.gamma,
            "amplitude": dict(self.amplitude),
            "period": self.period,
            "jitter": self.jitter,
            "n_peaks": self.n_peaks,
            "note": self.note,
            "final_state": asdict(self.final_state),
        }


def integrate(
    x0, params: UnitParams, mu_0: float, cfg: IntegrationConfig, *, z: float | None = None
) -> Trajectory:
    """Integrate from ``x0`` over ``[0, cfg.T_end]``.

    Parameters
    ----------
    x0 : State or array_like, shape (9,)
    params : UnitParams
        The voltage is ``params.U``.
    mu_0 : float
        Operating vane opening about which ``mu_delta`` is measured.
    cfg : IntegrationConfig
    z : float, optional
        Deadband override (``0`` for the smooth governor).

    Raises
    ------
    DivergenceError
        When a component exceeds 1e9 in magnitude, becomes non-finite, or
        the state leaves the model domain; the partial trajectory is
        attached as ``exc.trajectory``.
    """
    x = np.array(x0.to_array() if isinstance(x0, State) else x0, dtype=float)
    if x.shape != (9,) or not np.all(np.isfinite(x)):
        raise ConfigError("initial state must be nine finite numbers")
    if not mu_0 + x[8] > 0 and not cfg.clamp_mu:
        raise ConfigError("initial vane opening mu_0 + mu_delta must be positive")
    pv = pack_params(params, mu_0, z)
    Mdi, Mqi = inverse_matrices(params)
    ev_t = np.empty(cfg.event_capacity)
    ev_k = np.empty(cfg.event_capacity, dtype=np.int64)
    stride = int(cfg.record_stride)
    rec, n_rec, n_ev, status, step = _kernel.rk4_integrate(
        x, pv, Mdi, Mqi, cfg.dt, cfg.n_steps, stride, cfg.clamp_mu, ev_t, ev_k
    )
    kept = min(n_ev, cfg.event_capacity)
    traj = Trajectory(
        times=np.arange(n_rec) * (cfg.dt * stride),
        states=rec[:n_rec].copy(),
        events=[(float(t), EVENT_KINDS[int(k)]) for t, k in zip(ev_t[:kept], ev_k[:kept])],
        gamma=params.gamma,
        mu_0=float(mu_0),
        dropped_events=int(n_ev - kept),
    )
    if status != _kernel.OK:
        what = "state diverged" if status == _kernel.DIVERGED else "state left the model domain"
        exc = DivergenceError(what, step * cfg.dt)
        exc.trajectory = traj
        raise exc
    return traj


def _tail_amplitudes(states: np.ndarray) -> np.ndarray:
    ptp = np.ptp(states, axis=0)
    scale = np.maximum(1.0, np.abs(states).max(axis=0))
    return ptp / scale


def classify_regime(
    traj: Trajectory,
    cfg: IntegrationConfig | None = None,
    *,
    T_discard: float | None = None,
    eq_tol: float | None = None,
    cycle_tol: float | None = None,
    tail_fraction: float = 0.2,
) -> RegimeReport:
    """Classify the post-transient behaviour of a run.

    Amplitudes are peak-to-peak over ``t >= T_discard``.  The run counts as
    an equilibrium when every variable's peak-to-peak over the final
    ``tail_fraction`` of that window, divided by ``max(1, |x|)``, is below
    ``eq_tol``; a slowly decaying oscillation is therefore judged by where
    it ends up.  It is a limit cycle when the ``s`` swing exceeds
    ``cycle_tol`` over the window and over its tail, successive peak
    spacings deviate from their mean by less than 5 %, and the swing is not
    shrinking by more than 5 % between the two halves of the window.

    Raises
    ------
    InsufficientDataError
        If the window holds fewer than 4 ``s`` peaks while the swing is
        large enough for a limit-cycle claim, or if the window is empty.
    """
    cfg = cfg or IntegrationConfig()
    T_discard = cfg.T_discard if T_discard is None else T_discard
    eq_tol = cfg.eq_tol if eq_tol is None else eq_tol
    cycle_tol = cfg.cycle_tol if cycle_tol is None else cycle_tol

    t = traj.times
    mask = t >= t[0] + T_discard
    if mask.sum() < 8:
        raise InsufficientDataError("post-discard window has fewer than 8 samples")
    win = traj.states[mask]
    tw = t[mask]
    amp = dict(zip(STATE_NAMES, np.ptp(win, axis=0).tolist()))
    final = State.from_array(win[-1])
    n_tail = max(8, int(round(tail_fraction * len(win))))
    tail = win[-n_tail:]
    if _tail_amplitudes(tail).max() < eq_tol:
        return RegimeReport("equilibrium", amp, None, final, traj.gamma)

    s = win[:, 1]
    s_tail = np.ptp(tail[:, 1])
    if amp["s"] <= cycle_tol or s_tail <= cycle_tol:
        return RegimeReport(
            "unresolved", amp, None, final, traj.gamma,
            note="residual motion above eq_tol but s swing below cycle_tol",
        )
    peaks, _ = find_peaks(s, prominence=cycle_tol / 2)
    if len(peaks) < 4:
        raise InsufficientDataError(f"only {len(peaks)} peaks of s in the classification window")
    tp = _refine_peak_times(tw, s, peaks)
    spacing = np.diff(tp)
    period = float(spacing.mean())
    jitter = float(np.max(np.abs(spacing - period)) / period)
    half = len(s) // 2
    shrink = np.ptp(s[half:]) / np.ptp(s[:half])
    if jitter < 0.05 and shrink > 0.95:
        return RegimeReport(
            "limit_cycle", amp, period, final, traj.gamma, jitter=jitter, n_peaks=len(peaks)
        )
    note = f"irregular peaks (jitter {jitter:.3f})" if jitter >= 0.05 else (
        f"oscillation decaying (second/first half swing {shrink:.3f})"
    )
    return RegimeReport(
        "unresolved", amp, period, final, traj.gamma, jitter=jitter, n_peaks=len(peaks), note=note
    )


def _refine_peak_times(t, y, peaks):
    """Parabolic interpolation of sampled maxima."""
    out = np.array(t[peaks], dtype=float)
    h = t[1] - t[0]
    for j, i in enumerate(peaks):
        if 0 < i < len(y) - 1:
            a, b, c = y[i - 1], y[i], y[i + 1]
            den = a - 2 * b + c
            if den != 0:
                out[j] += 0.5 * h * (a - c) / den
    return out


def rebase(x, mu_old: float, mu_new: float) -> np.ndarray:
    """Re-express a state relative to a new operating vane opening.

    The physical opening ``mu_0 + mu_delta`` is preserved.
    """
    x = np.array(x.to_array() if isinstance(x, State) else x, dtype=float)
    x[8] = mu_old + x[8] - mu_new
    return x


def _run(x0, gamma: float, params: UnitParams, cfg: IntegrationConfig):
    p = params.with_gamma(gamma)
    mu_0, _ = solve_mu0(gamma, p)
    traj = integrate(x0, p, mu_0, cfg)
    return traj, classify_regime(traj, cfg)


def run_scenario(
    scenario: str,
    params: UnitParams,
    cfg: IntegrationConfig,
    *,
    gamma: float | None = None,
    x0=None,
    chain: bool = True,
) -> tuple[Trajectory, RegimeReport]:
    """Run one of the voltage scenarios.

    Parameters
    ----------
    scenario : {"rated", "reduced_089", "reduced_07", "custom"}
    gamma : float, optional
        Voltage ratio for ``"custom"``.
    x0 : array_like, optional
        Initial state for ``"rated"`` and ``"custom"``, and for the reduced
        scenarios when ``chain`` is False.  Defaults to
        ``(0, 1, 0, 0, 0, 0, 0, 0, 0)``.
    chain : bool
        Start each reduced-voltage run from the final state of the
        preceding one (rated, then 0.89, then 0.7), with the voltage stepped
        at ``t = 0``.  When False each scenario is a cold start from ``x0``.
    """
    start = np.asarray(RATED_X0 if x0 is None else x0, dtype=float)
    if scenario == "custom":
        if gamma is None:
            raise ConfigError("custom scenario needs gamma")
        return _run(start, gamma, params, cfg)
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    if scenario == "rated" or not chain:
        return _run(start, SCENARIOS[scenario], params, cfg)
    return run_chain(params, cfg, x0=start, upto=scenario)[-1]


def run_chain(
    params: UnitParams, cfg: IntegrationConfig, *, x0=None, upto: str = "reduced_07"
) -> list[tuple[Trajectory, RegimeReport]]:
    """Rated run followed by the successive voltage reductions."""
    x = np.asarray(RATED_X0 if x0 is None else x0, dtype=float)
    out = []
    prev_mu = None
    for name in SCENARIO_CHAIN:
        gamma = SCENARIOS[name]
        if prev_mu is not None:
            x = rebase(x, prev_mu, solve_mu0(gamma, params)[0])
        traj, rep = _run(x, gamma, params, cfg)
        out.append((traj, rep))
        x, prev_mu = traj.states[-1], traj.mu_0
        if name == upto:
            break
    return out


@dataclass(frozen=True)
class AmplitudePoint:
    beta: float
    kind: str
    amplitude_s: float
    period_s: float | None
    note: str = ""


def step_from_rated(beta: float, params: UnitParams, cfg: IntegrationConfig, rated=None) -> AmplitudePoint:
    """Start at the rated equilibrium, step the voltage to ``beta`` and classify."""
    try:
        eq = rated if rated is not None else operating_equilibrium(1.0, params)
        mu_new = solve_mu0(beta, params)[0]
        x0 = rebase(eq.state, eq.mu_0, mu_new)
        _, rep = _run(x0, beta, params, cfg)
    except DivergenceError as exc:
        return AmplitudePoint(beta, "unresolved", math.nan, None, f"diverged: {exc}")
    except HydroUnitError as exc:
        return AmplitudePoint(beta, "unresolved", math.nan, None, str(exc))
    amp = 0.0 if rep.kind == "equilibrium" else rep.amplitude_s
    return AmplitudePoint(beta, rep.kind, amp, rep.period, rep.note)


def amplitude_sweep(
    beta_grid, params: UnitParams, cfg: IntegrationConfig, jobs: int = 1
) -> list[AmplitudePoint]:
    """Steady oscillation amplitude of ``s`` after a voltage step from rated.

    Equilibria report amplitude 0.  Failed points are returned as
    ``unresolved`` rows with the reason in ``note``.
    """
    grid = [float(b) for b in beta_grid]
    if not grid:
        raise ConfigError("beta grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("beta grid must be strictly ascending")
    if grid[0] <= 0 or grid[-1] > 1.2:
        raise ConfigError("beta grid must lie in (0, 1.2]")
    rated = operating_equilibrium(1.0, params)
    fn = functools.partial(step_from_rated, params=params, cfg=cfg, rated=rated)
    return parallel_map(fn, grid, jobs)


def perturbed_start(eq, size: float = 1e-4, seed: int = 0) -> np.ndarray:
    """Equilibrium state plus a reproducible random offset of norm ``size``.

    The offset is applied to ``theta_delta``, ``s`` and ``mu_delta`` only,
    so that it has the same effect whatever the scale of the flux states.
    """
    rng = np.random.default_rng(seed)
    d = np.zeros(9)
    d[[0, 1, 8]] = rng.standard_normal(3)
    d *= size / np.linalg.norm(d)
    return eq.state.to_array() + d


TRAJECTORY_COLUMNS = ("t",) + STATE_NAMES
AMPLITUDE_COLUMNS = ("beta", "kind", "amplitude_s", "period_s")


def trajectory_rows(traj: Trajectory):
    for t, row in zip(traj.times, traj.states):
        yield (float(t), *row.tolist())


def amplitude_rows(points):
    return [
        (p.beta, p.kind, p.amplitude_s, math.nan if p.period_s is None else p.period_s)
        for p in points
    ]


def settle(
    x0,
    params: UnitParams,
    mu_0: float,
    cfg: IntegrationConfig,
    *,
    z: float | None = None,
    max_extensions: int = 4,
) -> tuple[RegimeReport, float]:
    """Integrate and classify, extending the horizon while the verdict is unresolved.

    Slowly decaying runs need longer than ``cfg.T_end`` to fall below
    ``eq_tol``.  Each extension continues from the final state for another
    ``T_end - T_discard`` seconds and classifies that segment on its own.

    Returns
    -------
    report : RegimeReport
    horizon : float
        Total simulated time [s].
    """
    traj = integrate(x0, params, mu_0, cfg, z=z)
    rep = classify_regime(traj, cfg)
    horizon = cfg.T_end
    span = cfg.T_end - cfg.T_discard
    ext_cfg = IntegrationConfig(**{**cfg.to_dict(), "T_end": span, "T_discard": 0.0})
    for _ in range(max_extensions):
        if rep.kind != "unresolved":
            break
        traj = integrate(traj.states[-1], params, mu_0, ext_cfg, z=z)
        rep = classify_regime(traj, ext_cfg)
        horizon += span
    return rep, horizon
