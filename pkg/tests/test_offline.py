import json
import math

import numpy as np
import pytest

import scenarios
from admitlearn.adaptation import adaptation_loop
from admitlearn.admittance import AdmittanceParams
from admitlearn.envs import EnvConfig
from admitlearn.errors import ConfigError
from admitlearn.offline import (
    GainScenario,
    GainSearchConfig,
    cem_gain_search,
    config_hash,
    evaluate_gains,
    is_overdamped,
    load_baseline_gains,
    load_gain_file,
    manual_gains,
    save_gain_file,
)
from admitlearn.trajectories import PlanSettings


def short_wall():
    return GainScenario(EnvConfig(task="wall", reward_scale=100.0), PlanSettings(duration=1.5), (0.03,))


class TestSearch:
    def test_singleton_bounds_return_that_point(self):
        cfg = GainSearchConfig(population=4, iterations=2, k_bounds=(250.0, 250.0), seeds=(0,))
        r = cem_gain_search(cfg, short_wall())
        assert r.params.k[0] == pytest.approx(250.0)
        assert r.params.d[0] == pytest.approx(2 * math.sqrt(250.0))

    def test_never_worse_than_start(self):
        cfg = GainSearchConfig(population=6, iterations=2, seeds=(0,))
        r = cem_gain_search(cfg, short_wall())
        assert r.score >= r.initial_score
        assert r.evaluations == (1 + 2 * 6 + 1) * 1

    def test_deterministic(self):
        cfg = GainSearchConfig(population=4, iterations=1, seeds=(0,))
        a = cem_gain_search(cfg, short_wall())
        b = cem_gain_search(cfg, short_wall())
        assert a.params == b.params and a.score == b.score

    def test_full_mode_shape(self):
        cfg = GainSearchConfig(population=4, iterations=1, seeds=(0,), mode="full")
        r = cem_gain_search(cfg, short_wall())
        assert r.params.n == 1 and 0.5 <= r.params.m[0] <= 5.0

    def test_crashing_candidates_score_minus_inf(self):
        bad = GainScenario(EnvConfig(task="wall"), PlanSettings(duration=0.5), (-0.05,))
        assert evaluate_gains(AdmittanceParams.critically_damped([100.0]), bad, [0]) == -math.inf

    def test_all_failed_sets_warning(self):
        bad = GainScenario(EnvConfig(task="wall"), PlanSettings(duration=0.5), (-0.05,))
        r = cem_gain_search(GainSearchConfig(population=2, iterations=1, seeds=(0,)), bad)
        assert r.warning

    @pytest.mark.parametrize("kw", [{"mode": "diag"}, {"population": 0}, {"elite_fraction": 0.0},
                                    {"k_bounds": (10.0, 1.0)}, {"seeds": ()}])
    def test_invalid_config(self, kw):
        with pytest.raises(ConfigError):
            GainSearchConfig(**kw)

    def test_packaged_wall_search_reproduces_frozen_gain(self):
        cfg = scenarios.wall_suite()
        r = cem_gain_search(cfg.gain_search, GainScenario(cfg.sim, cfg.plan, cfg.start, cfg.dt))
        assert r.params.k[0] == pytest.approx(scenarios.WALL_K, rel=1e-6)


class TestLearnedWallGains:
    def run(self, env):
        cfg, plan = scenarios.wall_plan()
        return adaptation_loop(env, plan, scenarios.wall_gains(), seed=1000)

    def test_settle_in_nominal_sim(self):
        cfg = scenarios.wall_suite()
        assert self.run(cfg.sim).outcome.separations == 0

    def test_bounce_on_ten_times_stiffer_wall(self):
        cfg = scenarios.wall_suite()
        assert self.run(cfg.real).outcome.separations >= 3


class TestManualGains:
    def test_assembly_table(self):
        p = manual_gains("assembly", full=True)
        np.testing.assert_array_equal(p.k, 200.0)
        np.testing.assert_array_equal(p.m, [3, 3, 3, 2, 2, 2])
        assert np.all(is_overdamped(p))

    def test_pivot_table(self):
        p = manual_gains("pivot", full=True)
        np.testing.assert_array_equal(p.m[:3], 4.0)
        np.testing.assert_array_equal(p.k, [300, 300, 300, 200, 200, 200])
        assert np.all(is_overdamped(p))

    def test_sim_axes(self):
        p = manual_gains("assembly")
        assert p.n == 2 and p.m[0] == 3.0 and p.d[1] == 300.0

    def test_wall_has_no_table(self):
        with pytest.raises(ConfigError):
            manual_gains("wall")

    def test_unknown_baseline(self):
        with pytest.raises(ConfigError):
            load_baseline_gains("sac")

    def test_direct_transfer_needs_file(self):
        with pytest.raises(ConfigError):
            load_baseline_gains("direct_transfer")


class TestGainFile:
    def test_round_trip(self, tmp_path):
        p = AdmittanceParams([1.0, 2.0], [300.0, 40.0], [34.6, 17.9])
        path = save_gain_file(tmp_path / "g.json", "assembly", p, 3, {"a": 1})
        q, doc = load_gain_file(path)
        assert q == p
        assert doc["axes"] == ["x", "z"]
        assert doc["provenance"] == {"seed": 3, "config_hash": config_hash({"a": 1})}
        assert load_baseline_gains("direct_transfer", gain_file=path) == p

    def test_missing(self, tmp_path):
        with pytest.raises(ConfigError):
            load_gain_file(tmp_path / "nope.json")

    def test_malformed(self, tmp_path):
        path = tmp_path / "g.json"
        path.write_text(json.dumps({"m": [1.0]}))
        with pytest.raises(ConfigError):
            load_gain_file(path)

    def test_hash_is_order_independent(self):
        assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
