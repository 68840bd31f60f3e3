import math

import numpy as np
import pytest

from hydrounit.errors import ConfigError, DivergenceError, InsufficientDataError, ParameterError
from hydrounit.model import IDX
from hydrounit.transient import (
    IntegrationConfig,
    Trajectory,
    amplitude_sweep,
    classify_regime,
    integrate,
    perturbed_start,
    rebase,
    run_scenario,
    settle,
)

SHORT = IntegrationConfig(T_end=20.0, T_discard=10.0)


def synthetic(signal_s, dt=0.01, T=100.0):
    t = np.arange(0.0, T, dt)
    states = np.zeros((t.size, 9))
    states[:, 1] = signal_s(t)
    states[:, 2] = 50.0
    return Trajectory(times=t, states=states)


CFG = IntegrationConfig(T_end=100.0, T_discard=50.0)


def test_classify_constant():
    rep = classify_regime(synthetic(lambda t: 0 * t), CFG)
    assert rep.kind == "equilibrium"


def test_classify_sine_period():
    T = 0.8
    rep = classify_regime(synthetic(lambda t: 0.01 * np.sin(2 * np.pi * t / T)), CFG)
    assert rep.kind == "limit_cycle"
    assert rep.period == pytest.approx(T, abs=0.01)
    assert rep.amplitude_s == pytest.approx(0.02, rel=1e-3)


def test_classify_decaying_to_rest():
    rep = classify_regime(synthetic(lambda t: 0.01 * np.exp(-t / 3) * np.sin(5 * t)), CFG)
    assert rep.kind == "equilibrium"


def test_classify_slow_decay_not_a_cycle():
    rep = classify_regime(synthetic(lambda t: 0.01 * np.exp(-t / 40) * np.sin(5 * t)), CFG)
    assert rep.kind == "unresolved"
    assert "decaying" in rep.note


def test_classify_too_few_peaks():
    with pytest.raises(InsufficientDataError):
        classify_regime(synthetic(lambda t: 0.01 * np.sin(2 * np.pi * t / 40)), CFG)


def test_equilibrium_persists(params, rated_eq):
    cfg = IntegrationConfig(T_end=100.0, T_discard=50.0)
    traj = integrate(rated_eq.state, params, rated_eq.mu_0, cfg)
    x0 = rated_eq.state.to_array()
    assert np.max(np.abs(traj.states[-1] - x0) / np.maximum(1, np.abs(x0))) < 1e-6
    assert classify_regime(traj, cfg).kind == "equilibrium"


def test_rk4_order(params):
    from hydrounit.checks import rk4_error_ratio

    ratio, _ = rk4_error_ratio(params)
    assert 12 <= ratio <= 20


def test_initial_clamp_logged(params, rated_eq):
    x = rated_eq.state.to_array()
    x[IDX["mu_delta"]] = 2.0
    cfg = IntegrationConfig(T_end=1.0, T_discard=0.5, record_stride=1)
    traj = integrate(x, params, rated_eq.mu_0, cfg)
    assert traj.states[0, IDX["mu_delta"]] == pytest.approx(params.gov.mu_max - rated_eq.mu_0)
    assert traj.events and traj.events[0] == (0.0, "stop_hit")


def test_event_capacity_counts_dropped(params, rated_eq):
    x = perturbed_start(rated_eq, 0.01, seed=3)
    cfg = IntegrationConfig(T_end=5.0, T_discard=1.0, event_capacity=0)
    traj = integrate(x, params, rated_eq.mu_0, cfg)
    assert traj.events == []
    assert traj.dropped_events > 0


def test_divergence_reports_time(params, rated_eq):
    x = rated_eq.state.to_array()
    x[IDX["Q"]] = 1e6  # far too stiff for the fixed step
    with pytest.raises(DivergenceError) as ei:
        integrate(x, params, rated_eq.mu_0, SHORT)
    assert ei.value.time == pytest.approx(SHORT.dt)
    assert ei.value.trajectory.states.shape[1] == 9


def test_integrate_rejects_bad_state(params):
    with pytest.raises(ConfigError):
        integrate(np.zeros(8), params, 0.2, SHORT)


def test_determinism(params, rated_eq):
    x = perturbed_start(rated_eq, 1e-3, seed=7)
    a = integrate(x, params, rated_eq.mu_0, SHORT)
    b = integrate(x, params, rated_eq.mu_0, SHORT)
    assert a.states.tobytes() == b.states.tobytes()


def test_perturbed_start_size(rated_eq):
    x = perturbed_start(rated_eq, 1e-4, seed=0)
    d = x - rated_eq.state.to_array()
    assert np.linalg.norm(d) == pytest.approx(1e-4)
    assert np.array_equal(perturbed_start(rated_eq, 1e-4, seed=0), x)


def test_rebase_keeps_opening():
    x = np.zeros(9)
    x[8] = 0.05
    y = rebase(x, 0.25, 0.2)
    assert 0.2 + y[8] == pytest.approx(0.25 + 0.05)


@pytest.mark.parametrize(
    "kwargs, key",
    [
        ({"dt": 0.0}, "integration.dt"),
        ({"T_end": 10.0, "T_discard": 10.0}, "integration.T_discard"),
        ({"record_stride": 0}, "integration.record_stride"),
    ],
)
def test_config_validation(kwargs, key):
    with pytest.raises(ParameterError) as ei:
        IntegrationConfig(**kwargs)
    assert ei.value.key == key


def test_custom_scenario_needs_gamma(params):
    with pytest.raises(ConfigError):
        run_scenario("custom", params, SHORT)
    with pytest.raises(ConfigError):
        run_scenario("unknown", params, SHORT)


def test_settle_extends_horizon(params):
    from hydrounit.equilibria import operating_equilibrium

    eq = operating_equilibrium(0.7, params)
    p = params.with_gamma(0.7)
    cfg = IntegrationConfig(T_end=40.0, T_discard=20.0)
    rep, horizon = settle(perturbed_start(eq, 1e-4), p, eq.mu_0, cfg, z=0.0)
    assert horizon >= 40.0
    assert rep.kind == "equilibrium"


def test_amplitude_grid_validation(params):
    for grid in ([], [0.9, 0.8], [0.0, 0.5], [1.0, 1.3]):
        with pytest.raises(ConfigError):
            amplitude_sweep(grid, params, SHORT)


def test_amplitude_rated_is_zero(params):
    cfg = IntegrationConfig(T_end=60.0, T_discard=30.0)
    (pt,) = amplitude_sweep([1.0], params, cfg)
    assert pt.kind == "equilibrium" and pt.amplitude_s == 0.0


def test_trajectory_columns(params, rated_eq):
    traj = integrate(rated_eq.state, params, rated_eq.mu_0, SHORT)
    assert traj.column("s").shape == traj.times.shape
    assert math.isclose(traj.times[1] - traj.times[0], SHORT.dt * SHORT.record_stride)
