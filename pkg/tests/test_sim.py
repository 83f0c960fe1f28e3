import dataclasses
import math

import numpy as np
import pytest

from epictl import rng
from epictl.errors import UnsupportedExponent, ValidationError
from epictl.model import Controls, StateVector, drift, drift_internal
from epictl.sim import (SimConfig, ensemble_stats, estimate_cost, fit_c0, simulate_ensemble, simulate_path,
                        step_euler_maruyama)

BACKENDS = ("numba", "numpy")


def det(params):
    return params.replace(sigma=(0.0, 0.0, 0.0, 0.0))


# ----------------------------------------------------------------- one step

def test_single_deterministic_step(table1, x0, u_table1):
    xn, clamps = step_euler_maruyama(0.0, x0, u_table1, table1, 0.001, np.zeros(4))
    assert xn.s_pop == pytest.approx(99.770787839, abs=1e-9)
    assert xn.s_pop == pytest.approx(99.8 - 29.212160870 * 0.001, rel=1e-14)
    assert clamps == 0


def test_step_without_dynamics_is_identity(table1):
    p = det(table1).replace(eta=0.0, kappa=0.0, zeta=0.0, mu=0.0, beta0=0.0, beta1=0.0, beta2=0.0)
    x = StateVector(0.0, 40.0, 30.0, 30.0)
    for dt in (1e-4, 0.1, 3.0):
        assert step_euler_maruyama(0.2, x, (0.0, 0.0), p, dt, np.ones(4), state_floor=0.0)[0] == x


def test_step_sigma_zero_is_deterministic_euler(table1, x0, u_table1):
    p = det(table1)
    xn, _ = step_euler_maruyama(0.3, x0, u_table1, p, 0.01, np.array([5.0, -3.0, 2.0, 1.0]))
    expected = x0.as_array() + 0.01 * drift_internal(0.3, x0.as_array(), u_table1, p)
    assert np.array_equal(xn.as_array(), expected)


def test_step_clamps_and_counts(table1):
    xn, clamps = step_euler_maruyama(0.0, (1.0, 1.0, 1e-3, 1e-3), (1.0, 0.0), det(table1), 0.1, np.zeros(4),
                                     state_floor=1e-8)
    assert clamps >= 1
    assert xn.i_pop == 1e-8


def test_step_rejects_bad_dt(table1, x0, u_table1):
    with pytest.raises(ValidationError):
        step_euler_maruyama(0.0, x0, u_table1, table1, 0.0, np.zeros(4))


# -------------------------------------------------------------------- paths

@pytest.mark.parametrize("backend", BACKENDS)
def test_one_step_path_matches_step(table1_cfg, backend):
    cfg = dataclasses.replace(table1_cfg.sim, n_steps=1, t_end=0.01)
    path = simulate_path(table1_cfg.params, cfg, table1_cfg.x0, replicate_index=5, backend=backend)
    dw = math.sqrt(cfg.dt) * rng.normals(cfg.seed, 5, 0)
    xn, _ = step_euler_maruyama(0.0, table1_cfg.x0, cfg.fixed_controls, table1_cfg.params, cfg.dt, dw)
    np.testing.assert_allclose(path.states[1], xn.as_array(), rtol=1e-13)


@pytest.mark.parametrize("backend", BACKENDS)
def test_path_determinism(table1_cfg, backend):
    a = simulate_path(table1_cfg.params, table1_cfg.sim, table1_cfg.x0, 3, backend=backend)
    b = simulate_path(table1_cfg.params, table1_cfg.sim, table1_cfg.x0, 3, backend=backend)
    assert np.array_equal(a.states, b.states)
    assert a.states.shape == (table1_cfg.sim.n_steps + 1, 4)


def test_backends_agree(table1_cfg):
    sim = dataclasses.replace(table1_cfg.sim, n_replicates=20)
    a = simulate_ensemble(table1_cfg.params, sim, table1_cfg.x0, backend="numba")
    b = simulate_ensemble(table1_cfg.params, sim, table1_cfg.x0, backend="numpy")
    np.testing.assert_allclose(a.states, b.states, rtol=1e-9, atol=1e-9)
    assert np.array_equal(a.clamp_events, b.clamp_events)


def test_backends_agree_feedback(table1_cfg):
    sim = dataclasses.replace(table1_cfg.sim, n_replicates=5, control_mode="optimal_feedback")
    a = simulate_ensemble(table1_cfg.params, sim, table1_cfg.x0, backend="numba")
    b = simulate_ensemble(table1_cfg.params, sim, table1_cfg.x0, backend="numpy")
    np.testing.assert_allclose(a.states, b.states, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(a.controls, b.controls, rtol=1e-9, atol=1e-9)


@pytest.mark.parametrize("backend", BACKENDS)
def test_ensemble_is_permutation_invariant(table1_cfg, backend):
    sim = dataclasses.replace(table1_cfg.sim, n_replicates=6, n_steps=200)
    fwd = simulate_ensemble(table1_cfg.params, sim, table1_cfg.x0, backend=backend)
    order = [4, 1, 5, 0, 3, 2]
    perm = simulate_ensemble(table1_cfg.params, sim, table1_cfg.x0, backend=backend, replicate_indices=order)
    for j, rep in enumerate(order):
        assert np.array_equal(perm.states[j], fwd.states[rep])


def test_single_replicate_ensemble_equals_path(table1_cfg):
    sim = dataclasses.replace(table1_cfg.sim, n_replicates=1)
    ens = simulate_ensemble(table1_cfg.params, sim, table1_cfg.x0)
    path = simulate_path(table1_cfg.params, sim, table1_cfg.x0, 0)
    assert np.array_equal(ens.states[0], path.states)


def test_feedback_requires_theta_two(table1_cfg):
    sim = dataclasses.replace(table1_cfg.sim, control_mode="optimal_feedback", n_replicates=1)
    with pytest.raises(UnsupportedExponent):
        simulate_path(table1_cfg.params.replace(theta1=3.0), sim, table1_cfg.x0)


def test_schedule_mode_interpolates_knots(table1_cfg):
    sim = dataclasses.replace(table1_cfg.sim, control_mode="schedule", n_replicates=1, n_steps=100,
                              schedule=((0.0, 1.0, 0.0), (0.5, 0.2, 0.5)))
    path = simulate_path(det(table1_cfg.params), sim, table1_cfg.x0)
    t = path.times[:-1]
    np.testing.assert_allclose(path.controls[:, 0], np.interp(t, [0, 0.5], [1.0, 0.2]), rtol=1e-14)
    np.testing.assert_allclose(path.controls[:, 1], np.interp(t, [0, 0.5], [0.0, 0.5]), rtol=1e-14)
    assert np.all(path.controls[50:] == (0.2, 0.5))


def test_feedback_controls_in_unit_interval(table1_cfg):
    sim = dataclasses.replace(table1_cfg.sim, control_mode="optimal_feedback", n_replicates=10)
    ens = simulate_ensemble(table1_cfg.params, sim, table1_cfg.x0)
    assert ens.controls.min() >= 0.0 and ens.controls.max() <= 1.0


# -------------------------------------------------------- deterministic runs

def rk4_path(params, x0, u, t_end, n):
    dt = t_end / n
    x = np.array(x0.as_array())
    out = [x.copy()]
    f = lambda t, y: drift_internal(t, y, u, params)
    for k in range(n):
        t = k * dt
        k1 = f(t, x)
        k2 = f(t + dt / 2, x + dt / 2 * k1)
        k3 = f(t + dt / 2, x + dt / 2 * k2)
        k4 = f(t + dt, x + dt * k3)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(x.copy())
    return np.array(out)


def test_sigma_zero_close_to_rk4(table1_cfg):
    p = det(table1_cfg.params)
    sim = dataclasses.replace(table1_cfg.sim, n_replicates=1)
    em = simulate_path(p, sim, table1_cfg.x0).states
    ref = rk4_path(p, table1_cfg.x0, sim.fixed_controls, sim.t_end, sim.n_steps)
    # Lipschitz scale: largest finite-difference Jacobian row sum along the reference
    lip = 0.0
    for x in ref[::50]:
        h = 1e-6 * np.maximum(1.0, np.abs(x))
        jac = np.column_stack([(drift_internal(0, x + h[k] * np.eye(4)[k], sim.fixed_controls, p)
                                - drift_internal(0, x - h[k] * np.eye(4)[k], sim.fixed_controls, p)) / (2 * h[k])
                               for k in range(4)])
        lip = max(lip, np.abs(jac).sum(axis=1).max())
    gap = np.max(np.abs(em - ref) / np.maximum(np.abs(ref).max(axis=0), 1e-12))
    assert gap < 5 * sim.dt * lip


def test_deterministic_run_has_no_clamps(table1_cfg):
    # Faithful to the stated property; it does not hold for Table 1 (beta's drift
    # is negative whenever I > 0 and beta reaches zero near t = 0.76).
    sim = dataclasses.replace(table1_cfg.sim, n_replicates=1)
    path = simulate_path(det(table1_cfg.params), sim, table1_cfg.x0)
    assert path.clamp_events == 0


def test_deterministic_clamps_are_beta_hitting_zero(table1_cfg):
    p = det(table1_cfg.params)
    sim = dataclasses.replace(table1_cfg.sim, n_replicates=1)
    path = simulate_path(p, sim, table1_cfg.x0)
    x = path.states
    at_floor = x <= sim.state_floor
    assert not at_floor[:, 1:].any()
    first = int(np.argmax(at_floor[:, 0]))
    assert 0.7 < path.times[first] < 0.8
    assert path.clamp_events == int(at_floor[:, 0].sum())
    # before the floor, Euler on beta is exactly the printed beta drift
    d = np.array([drift(t, s, sim.fixed_controls, p)[3] for t, s in zip(path.times[:first - 1], x[:first - 1])])
    assert np.all(d < 0)


def test_drift_only_s_strictly_decreasing(table1_cfg):
    p = det(table1_cfg.params.replace(sigma=(0.05, 0.01, 0.03, 0.05)))
    sim = dataclasses.replace(table1_cfg.sim, n_replicates=1)
    path = simulate_path(p, sim, table1_cfg.x0)
    ds = np.diff(path.column("S"))
    assert np.all(ds < 0)
    d = np.array([drift(t, x, sim.fixed_controls, p)[0] for t, x in zip(path.times[:-1], path.states[:-1])])
    assert np.all(d < 0)


# ---------------------------------------------------------------- statistics

def test_stats_constant_path(table1_cfg):
    p = det(table1_cfg.params).replace(eta=0.0, kappa=0.0, zeta=0.0, mu=0.0, beta0=0.0, beta1=0.0, beta2=0.0)
    x = StateVector(1e-300, 50.0, 25.0, 25.0)
    sim = dataclasses.replace(table1_cfg.sim, n_replicates=2, fixed_controls=Controls(0.0, 0.0), n_steps=50,
                              state_floor=1e-300)
    st = ensemble_stats(simulate_ensemble(p, sim, x))
    assert np.all(st.std == 0.0)
    assert st.sup_moment == float(np.dot(x.as_array(), x.as_array()))


def test_noisy_mean_s_below_start(table1_cfg):
    ens = simulate_ensemble(table1_cfg.params, table1_cfg.sim, table1_cfg.x0)
    st = ensemble_stats(ens)
    assert st.mean[-1, 1] < table1_cfg.x0.s_pop
    assert math.isfinite(st.sup_moment)
    x0n = float(np.dot(table1_cfg.x0.as_array(), table1_cfg.x0.as_array()))
    bound = st.c0 * (1 + x0n) * math.exp(st.c0 * table1_cfg.sim.t_end)
    assert st.sup_moment == pytest.approx(bound, rel=1e-10)


def test_fit_c0_is_smallest_constant():
    c0 = fit_c0(500.0, 99.0, 1.0)
    assert c0 * 100 * math.exp(c0) == pytest.approx(500.0, rel=1e-12)
    c = c0 * (1 - 1e-6)
    assert c * 100 * math.exp(c) < 500.0


def test_cost_estimate_deterministic(table1_cfg):
    p = det(table1_cfg.params)
    sim = dataclasses.replace(table1_cfg.sim, n_replicates=3)
    ens = simulate_ensemble(p, sim, table1_cfg.x0)
    mean, se = estimate_cost(ens)
    assert se == 0.0
    from epictl.model import cost_integrand
    path = ens.path(0)
    ref = sum(cost_integrand(t, x, u, p) for t, x, u in zip(path.times[:-1], path.states[:-1], path.controls))
    assert mean == pytest.approx(ref * sim.dt, rel=1e-12)


def test_simconfig_validation():
    with pytest.raises(ValidationError):
        SimConfig(n_steps=0)
    with pytest.raises(ValidationError):
        SimConfig(control_mode="bogus")
