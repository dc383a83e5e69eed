"""Property-based checks of the invariants that hold for any valid input."""

import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from admitlearn.admittance import (
    AdmittanceParams,
    ErrorState,
    ParamVector,
    energy,
    recover_gains,
    stable_dt_bound,
    step_error_dynamics,
    to_param_vector,
)
from admitlearn.cost import CostWeights, trajectory_cost
from admitlearn.envs import EnvConfig, env_step, initial_state
from admitlearn.forces import ForceWindow
from admitlearn.optimizer import OptProblem, optimize_residual

pos = st.floats(min_value=1e-3, max_value=1e4, allow_nan=False)
axes = st.integers(min_value=1, max_value=4)


@st.composite
def gains(draw, n=None):
    n = n or draw(axes)
    return AdmittanceParams(*(draw(st.lists(pos, min_size=n, max_size=n)) for _ in range(3)))


@given(gains())
def test_param_vector_round_trip(p):
    q = recover_gains(to_param_vector(p))
    for a, b in ((p.m, q.m), (p.k, q.k), (p.d, q.d)):
        np.testing.assert_allclose(a, b, rtol=1e-12)


@given(st.floats(0.1, 10.0), st.floats(1.0, 5000.0), st.floats(0.1, 2.0),
       st.floats(-0.05, 0.05), st.floats(-0.5, 0.5), st.floats(0.1, 1.0))
@settings(max_examples=200)
def test_unforced_energy_never_increases(m, k, zeta, e0, v0, dt_frac):
    # Semi-implicit Euler only dissipates when the step is small against the
    # period; the damping-ratio floor keeps the discrete energy monotone.
    p = AdmittanceParams([m], [k], [2 * zeta * math.sqrt(m * k)])
    dt = dt_frac * stable_dt_bound(p)
    u = to_param_vector(p)
    x = ErrorState(np.array([e0]), np.array([v0]))
    prev = energy(x, p)
    for _ in range(200):
        x = step_error_dynamics(x, [0.0], u, dt)
        cur = energy(x, p)
        assert cur <= prev * (1 + 1e-12) + 1e-300
        prev = cur


@given(st.floats(0.1, 10.0), st.floats(10.0, 1000.0), st.floats(-20.0, 20.0))
@settings(max_examples=50, deadline=None)
def test_constant_force_steady_state(m, k, f):
    p = AdmittanceParams.critically_damped([k], m=m)
    u = to_param_vector(p)
    dt = stable_dt_bound(p)
    x = ErrorState.zeros(1)
    steps = int(40 * math.sqrt(m / k) / dt)
    for _ in range(steps):
        x = step_error_dynamics(x, [f], u, dt)
    assert abs(x.e[0] - f / k) <= 1e-6 * max(1.0, abs(f / k))


arrays = st.lists(st.floats(-10, 10), min_size=1, max_size=40)


@given(arrays, st.floats(0.0, 1.0), st.floats(0.0, 5.0), st.floats(-5.0, 5.0))
def test_cost_is_linear_in_trajectory_scale(e, w, a, b):
    e = np.array(e)
    v = np.roll(e, 1)
    c1 = trajectory_cost((e, v), 0.01, CostWeights(w=w))
    c2 = trajectory_cost((a * e, a * v), 0.01, CostWeights(w=w))
    assert math.isclose(c2, a * c1, rel_tol=1e-12, abs_tol=1e-12)
    # Linear in w for fixed trajectories.
    cw = trajectory_cost((e, v), 0.01, CostWeights(w=1.0)) * w + trajectory_cost((e, v), 0.01, CostWeights(w=0.0)) * (1 - w)
    assert math.isclose(c1, cw, rel_tol=1e-12, abs_tol=1e-12)
    assert c1 >= 0.0


@given(st.floats(-0.01, 0.03), st.floats(-0.003, 0.003), st.floats(-0.2, 0.2), st.floats(-0.2, 0.2),
       st.floats(0.0, 1.0), st.floats(100.0, 1e5))
def test_friction_within_cone(x, z, vx, vz, mu, k_env):
    cfg = EnvConfig(task="assembly", mu=mu, k_env=k_env)
    state = initial_state(cfg, [0.02, 0.01])
    state, f = env_step(state, cfg, [x, z], [vx, vz], 0.01)
    if "surface" in state.contacts:
        assert abs(f[0]) <= mu * abs(f[1]) + 1e-9


@given(st.lists(st.floats(0.0, 15.0), min_size=5, max_size=60), st.floats(10.0, 3000.0), st.floats(0.0, 1.0))
@settings(max_examples=30, deadline=None)
def test_optimizer_monotone_and_feasible(forces, k, w):
    win = ForceWindow(len(forces), 0.01, 1)
    for i, f in enumerate(forces):
        win.record(i * 0.01, f)
    u = ParamVector([1.0], [k], [2 * math.sqrt(k)])
    problem = OptProblem(u, ErrorState.zeros(1), win, 0.01, CostWeights(w=w), budget=40)
    r = optimize_residual(problem)
    lo, hi = problem.bounds()
    new = r.u(u).as_array()
    assert r.cost_after <= r.cost_before
    assert np.all(new >= lo * (1 - 1e-12)) and np.all(new <= hi * (1 + 1e-12))
    assert r.evaluations <= 40
