import textwrap

import pytest

from admitlearn.config import (
    ConfigParseError,
    load_suite,
    packaged_config,
    parse_suite,
    resolve_config,
)
from admitlearn.errors import ConfigError

BASE = """\
schema_version: 1
task: wall
start: [0.03]
env:
  sim:
    k_env: 1000.0
  real:
    k_env: 10000.0
"""


def parse(extra="", base=BASE):
    return parse_suite(base + textwrap.dedent(extra))


@pytest.mark.parametrize("name", ["wall", "peg", "pivot"])
def test_packaged_configs_load(name):
    cfg = load_suite(packaged_config(name))
    assert cfg.real.k_env == 10 * cfg.sim.k_env
    assert cfg.real.latency_steps > 0 and cfg.sim.latency_steps == 0
    assert cfg.episodes == 10 and cfg.weights.w == 0.4


def test_minimal_defaults():
    cfg = parse()
    assert cfg.suite == "wall" and cfg.start == (0.03,)
    assert cfg.real.mu == cfg.sim.mu


def test_unknown_top_level_key_has_line():
    with pytest.raises(ConfigParseError) as info:
        parse("colour: red\n")
    assert info.value.key == "colour"
    assert info.value.line == 9


def test_unknown_nested_key():
    text = BASE.replace("    k_env: 10000.0", "    k_env: 10000.0\n    stifness: 3")
    with pytest.raises(ConfigParseError) as info:
        parse_suite(text)
    assert info.value.key == "env.real.stifness" and info.value.line == 9


def test_bad_schema_version():
    with pytest.raises(ConfigParseError) as info:
        parse_suite(BASE.replace("schema_version: 1", "schema_version: 2"))
    assert info.value.key == "schema_version" and info.value.line == 1


def test_missing_schema_version():
    with pytest.raises(ConfigParseError):
        parse_suite(BASE.replace("schema_version: 1\n", ""))


def test_real_equal_to_sim_rejected_for_comparisons():
    text = BASE.replace("    k_env: 10000.0", "    k_env: 1000.0")
    with pytest.raises(ConfigParseError) as info:
        parse_suite(text)
    assert info.value.key == "env.real"
    # A single-method run may use identical environments.
    assert parse_suite(text + "methods: [proposed]\n").real == parse_suite(text + "methods: [proposed]\n").sim


@pytest.mark.parametrize("extra,key", [
    ("adaptation:\n  w: 1.5\n", "adaptation.w"),
    ("adaptation:\n  period: 0\n", "adaptation"),
    ("adaptation:\n  force_source: oracle\n", "adaptation"),
    ("methods: [sac]\n", "methods"),
    ("gain_search:\n  mode: grid\n", "gain_search"),
    ("plan:\n  speed: 1\n", "plan"),
    ("episodes: 0\n", "episodes"),
])
def test_invalid_values(extra, key):
    with pytest.raises(ConfigParseError) as info:
        parse(extra)
    assert info.value.key == key


def test_negative_stiffness():
    with pytest.raises(ConfigParseError) as info:
        parse_suite(BASE.replace("k_env: 1000.0", "k_env: -1.0"))
    assert info.value.key == "env.sim"


def test_yaml_syntax_error_line():
    with pytest.raises(ConfigParseError) as info:
        parse_suite(BASE + "plan: [1, 2\n")
    assert info.value.line is not None


def test_gain_file_relative_to_config(tmp_path):
    (tmp_path / "g.json").write_text("{}")
    (tmp_path / "s.yaml").write_text(BASE + "gains: g.json\n")
    assert load_suite(tmp_path / "s.yaml").gains == str(tmp_path / "g.json")


def test_missing_gain_file(tmp_path):
    (tmp_path / "s.yaml").write_text(BASE + "gains: g.json\n")
    with pytest.raises(ConfigParseError) as info:
        load_suite(tmp_path / "s.yaml")
    assert info.value.key == "gains"


def test_resolve_by_name_or_path(tmp_path):
    assert resolve_config("peg") == packaged_config("peg")
    p = tmp_path / "x.yaml"
    p.write_text(BASE)
    assert resolve_config(str(p)) == p
    with pytest.raises(ConfigError):
        resolve_config("nonexistent")


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError):
        load_suite(tmp_path / "missing.yaml")
