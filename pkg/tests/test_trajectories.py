import numpy as np
import pytest

from admitlearn.adaptation import adaptation_loop
from admitlearn.admittance import AdmittanceParams
from admitlearn.envs import EnvConfig, Geometry
from admitlearn.errors import ConfigError
from admitlearn.trajectories import PlanSettings, scripted_trajectory


@pytest.mark.parametrize("task,start", [("wall", [0.03]), ("assembly", [0.02, 0.03]), ("pivot", [0.15, 0.005])])
def test_kinematic_consistency(task, start):
    plan = scripted_trajectory(task, Geometry(), start)
    assert plan.consistency_error() < 1e-6
    np.testing.assert_array_equal(plan.pos[0], start)


def test_assembly_ends_at_hole_bottom():
    g = Geometry()
    plan = scripted_trajectory("assembly", g, [0.02, 0.03])
    assert plan.pos[-1, 1] == pytest.approx(g.surface - g.hole_depth)
    assert plan.pos[-1, 0] == pytest.approx(g.hole_x, abs=1e-9)


def test_independent_of_environment():
    # Plans are built from geometry only; stiffness and friction are not inputs.
    a = scripted_trajectory("pivot", Geometry(), [0.15, 0.0])
    b = scripted_trajectory("pivot", EnvConfig(task="pivot", k_env=1e4, mu=0.9).geometry, [0.15, 0.0])
    np.testing.assert_array_equal(a.pos, b.pos)


def test_wall_plan_holds_press_depth():
    s = PlanSettings(duration=2.0, press_depth=0.004)
    plan = scripted_trajectory("wall", Geometry(), [0.03], s)
    assert plan.pos[-1, 0] == pytest.approx(-0.004)


def test_zero_gap_assembly_with_soft_gains():
    cfg = EnvConfig(task="assembly", noise_sigma=0.0, geometry=Geometry(clearance=0.0005))
    plan = scripted_trajectory("assembly", cfg.geometry, [0.0, 0.03])
    trace = adaptation_loop(cfg, plan, AdmittanceParams.critically_damped([200.0, 200.0], m=2.0))
    assert trace.outcome.success


@pytest.mark.parametrize("task,start,geometry", [
    ("assembly", [0.0, 0.03], Geometry(clearance=0.0)),
    ("assembly", [0.0, -0.01], Geometry()),
    ("pivot", [0.05, 0.0], Geometry()),
    ("wall", [-0.01], Geometry()),
    ("screw", [0.0], Geometry()),
])
def test_invalid_inputs(task, start, geometry):
    with pytest.raises(ConfigError):
        scripted_trajectory(task, geometry, start)
