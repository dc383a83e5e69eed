import math
from dataclasses import replace

import numpy as np
import pytest

from admitlearn.envs import (
    EnvConfig,
    EnvState,
    EpisodeMonitor,
    Geometry,
    assembly_reward,
    env_step,
    initial_state,
    pivot_reward,
    planar_rotation,
    randomize_initial_pose,
    rotation_distance,
    sensor_read,
    success_check,
)
from admitlearn.errors import ConfigError, NumericError


def wall(**kw):
    return EnvConfig(task="wall", **kw)


class TestContact:
    def test_no_penetration(self):
        cfg = wall(k_env=1e4)
        _, f = env_step(initial_state(cfg, [0.01]), cfg, [0.001], [0.0], 0.01)
        assert f[0] == 0.0

    def test_penalty_law(self):
        cfg = wall(k_env=1e4, d_env=0.0)
        _, f = env_step(initial_state(cfg, [0.0]), cfg, [-0.001], [0.0], 0.01)
        assert f[0] == pytest.approx(10.0)

    def test_damper_is_one_sided(self):
        cfg = wall(k_env=1e4, d_env=50.0)
        _, pressing = env_step(initial_state(cfg, [0.0]), cfg, [-0.001], [-0.1], 0.01)
        _, leaving = env_step(initial_state(cfg, [0.0]), cfg, [-0.001], [0.1], 0.01)
        assert pressing[0] == pytest.approx(15.0)
        assert leaving[0] == pytest.approx(10.0)

    def test_force_continuous_at_surface(self):
        cfg = wall(k_env=1e4, d_env=0.0)
        forces = [env_step(initial_state(cfg, [0.0]), cfg, [z], [0.0], 0.01)[1][0] for z in (1e-9, -1e-9)]
        assert abs(forces[0] - forces[1]) < 1e-4

    def test_sliding_friction_magnitude(self):
        cfg = EnvConfig(task="assembly", k_env=1e4, d_env=0.0, mu=0.3)
        state = initial_state(cfg, [0.02, 0.0])
        _, f = env_step(state, cfg, [0.02, -0.001], [0.05, 0.0], 0.01)
        assert f[1] == pytest.approx(10.0)
        assert abs(f[0]) == pytest.approx(3.0)

    def test_friction_bound_every_step(self):
        cfg = EnvConfig(task="assembly", k_env=1e4, mu=0.3)
        rng = np.random.default_rng(0)
        state = initial_state(cfg, [0.02, 0.0])
        for _ in range(500):
            pos = np.array([rng.uniform(-0.01, 0.03), rng.uniform(-0.003, 0.002)])
            vel = rng.normal(scale=0.05, size=2)
            state, f = env_step(state, cfg, pos, vel, 0.01)
            if "surface" in state.contacts:
                assert abs(f[0]) <= cfg.mu * f[1] + 1e-12

    def test_nan_command(self):
        cfg = wall()
        with pytest.raises(NumericError):
            env_step(initial_state(cfg, [0.0]), cfg, [math.nan], [0.0], 0.01)

    def test_peg_enters_hole(self):
        cfg = EnvConfig(task="assembly")
        state = initial_state(cfg, [0.0, 0.01])
        state, _ = env_step(state, cfg, [0.0005, -0.005], [0.0, 0.0], 0.01)
        assert state.in_hole
        state, f = env_step(state, cfg, [0.0005, -0.01], [0.0, 0.0], 0.01)
        assert np.all(f == 0.0)


class TestPivot:
    def push(self, cfg, x_path):
        state = initial_state(cfg, [x_path[0], 0.01])
        angles = [state.angle]
        for x in x_path:
            state, _ = env_step(state, cfg, [x, 0.01], [0.0, 0.0], 0.01)
            angles.append(state.angle)
        return np.array(angles), state

    def test_pushing_raises_bar_monotonically(self):
        cfg = EnvConfig(task="pivot")
        foot = cfg.geometry.object_length * math.cos(cfg.geometry.initial_angle)
        path = np.linspace(foot - 0.002, -0.01, 600)
        angles, state = self.push(cfg, path)
        assert np.all(np.diff(angles) >= -1e-12)
        assert angles.max() <= math.pi / 2
        assert success_check("pivot", state, cfg)

    def test_bar_slides_back_without_push(self):
        cfg = EnvConfig(task="pivot")
        foot = cfg.geometry.object_length * math.cos(cfg.geometry.initial_angle)
        angles, _ = self.push(cfg, np.r_[np.linspace(foot, 0.03, 200), np.full(300, 0.2)])
        assert angles[-1] < angles[200]


class TestSensor:
    def test_noiseless_passthrough(self):
        assert sensor_read([5.0], wall(noise_sigma=0.0))[0] == 5.0

    def test_clip(self):
        assert sensor_read([50.0], wall(noise_sigma=0.0, force_clip=10.0))[0] == 10.0
        assert sensor_read([-50.0], wall(noise_sigma=0.0, force_clip=10.0))[0] == -10.0

    def test_noise_mean(self):
        rng = np.random.default_rng(7)
        cfg = wall(noise_sigma=0.2)
        draws = np.array([sensor_read([5.0], cfg, rng)[0] for _ in range(100_000)])
        assert abs(draws.mean() - 5.0) < 0.01
        assert draws.std() == pytest.approx(0.2, rel=0.02)


class TestRewards:
    def test_assembly_at_goal(self):
        assert assembly_reward([0.1, 0.2], [0.1, 0.2]) == 10.0

    def test_assembly_unit_distance(self):
        assert assembly_reward([1.0, 0.0], [0.0, 0.0]) == pytest.approx(1.0)

    def test_assembly_half(self):
        assert assembly_reward([0.3, 0.4], [0.0, 0.0]) == pytest.approx(3.1623, abs=1e-4)

    def test_pivot_at_goal(self):
        r = planar_rotation(0.7)
        assert pivot_reward(r, r) == pytest.approx(math.pi / 2, abs=1e-7)

    def test_pivot_ninety_degrees(self):
        assert pivot_reward(planar_rotation(0.0), planar_rotation(math.pi / 2)) == pytest.approx(0.0, abs=1e-12)

    def test_pivot_forty_five(self):
        assert pivot_reward(planar_rotation(0.0), planar_rotation(math.pi / 4)) == pytest.approx(math.pi / 4)

    def test_distance_clamped(self):
        r = planar_rotation(1e-9)
        assert rotation_distance(r, r * (1 + 1e-15)) >= 0.0


class TestInitialPose:
    def test_assembly_range(self):
        rng = np.random.default_rng(0)
        poses = np.array([randomize_initial_pose("assembly", rng) for _ in range(10_000)])
        assert np.all((poses[:, 2] >= 0.025) & (poses[:, 2] <= 0.035))
        assert np.all(np.abs(poses[:, :2]) <= 0.03)

    def test_pivot_range(self):
        rng = np.random.default_rng(0)
        poses = np.array([randomize_initial_pose("pivot", rng) for _ in range(10_000)])
        assert np.all((poses[:, 0] >= 0.12) & (poses[:, 0] <= 0.18))
        assert np.all((poses[:, 1] >= 0.0) & (poses[:, 1] <= 0.01))

    def test_deterministic(self):
        a = [randomize_initial_pose("pivot", np.random.default_rng(5)) for _ in range(3)]
        b = [randomize_initial_pose("pivot", np.random.default_rng(5)) for _ in range(3)]
        np.testing.assert_array_equal(a, b)

    def test_unknown_task(self):
        with pytest.raises(ConfigError):
            randomize_initial_pose("screw", np.random.default_rng(0))


class TestSuccess:
    def test_inserted_peg(self):
        cfg = EnvConfig(task="assembly")
        state = EnvState(pos=np.array([0.0005, -0.019]), vel=np.zeros(2), in_hole=True)
        assert success_check("assembly", state, cfg)

    def test_peg_on_surface(self):
        cfg = EnvConfig(task="assembly")
        state = EnvState(pos=np.array([0.01, 0.0]), vel=np.zeros(2))
        assert not success_check("assembly", state, cfg)

    def test_timeout_reports_no_time(self):
        cfg = EnvConfig(task="assembly")
        mon = EpisodeMonitor(cfg)
        forces = [3.0, 7.5, 1.0]
        for i, f in enumerate(forces):
            mon.update(i * 0.01, EnvState(pos=np.array([0.01, 0.01]), vel=np.zeros(2)), [0.0, f])
        out = mon.outcome()
        assert not out.success and out.completion_time is None
        assert out.max_force == max(forces)


class TestConfig:
    @pytest.mark.parametrize("kw", [{"k_env": -1.0}, {"mu": -0.1}, {"force_clip": 0.0},
                                    {"noise_sigma": -1.0}, {"task": "screw"}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            EnvConfig(**kw)

    def test_perturbed_keeps_other_fields(self):
        cfg = EnvConfig(task="assembly", geometry=replace(Geometry(), clearance=0.001))
        real = cfg.perturbed(k_env=1e4)
        assert real.geometry.clearance == 0.001 and real.k_env == 1e4 and real.mu == cfg.mu

    def test_wrong_pose_size(self):
        with pytest.raises(ConfigError):
            initial_state(EnvConfig(task="assembly"), [0.0])
