"""Suite configuration files (YAML) with key-path and line diagnostics.

A suite file looks like::

    schema_version: 1
    suite: peg
    task: assembly
    episodes: 10
    seed: 0
    env:
      sim: {k_env: 1000.0, mu: 0.3}
      real: {k_env: 10000.0, latency_steps: 3, mu: 0.5}
    adaptation: {w: 0.4, period: 1.0}

``real`` holds overrides applied on top of ``sim``. All units are SI.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .adaptation import AdaptationConfig
from .cost import CostWeights
from .envs import TASKS, EnvConfig, Geometry
from .errors import AdmitLearnError, ConfigError
from .offline import GainSearchConfig
from .trajectories import PlanSettings

SCHEMA_VERSION = 1
METHODS = ("proposed", "manual_tune", "direct_transfer")

_TOP_KEYS = {
    "schema_version", "suite", "task", "dt", "episodes", "seed", "timeout", "start",
    "methods", "env", "geometry", "plan", "adaptation", "gain_search", "gains", "workers",
}
_ENV_KEYS = {f.name for f in dataclasses.fields(EnvConfig)} - {"task", "geometry", "seed"}
_ADAPT_KEYS = {"enabled", "w", "period", "budget", "eps", "trust_ratio", "force_source", "concurrent"}


class ConfigParseError(ConfigError):
    """Config error that knows which key (and source line) it came from."""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        where = []
        if key:
            where.append(f"key '{key}'")
        if line:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.key = key
        self.line = line


@dataclass(frozen=True)
class SuiteConfig:
    suite: str
    task: str
    sim: EnvConfig
    real: EnvConfig
    plan: PlanSettings = field(default_factory=PlanSettings)
    episodes: int = 10
    seed: int = 0
    dt: float = 0.01
    timeout: float = 60.0
    start: Optional[tuple] = None
    methods: tuple = METHODS
    adaptation: dict = field(default_factory=dict)
    gain_search: GainSearchConfig = field(default_factory=GainSearchConfig)
    gains: Optional[str] = None
    workers: int = 1
    source: Optional[str] = None

    @property
    def weights(self) -> CostWeights:
        return CostWeights(w=float(self.adaptation.get("w", 0.4)))

    def with_changes(self, **changes) -> "SuiteConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def _line_index(node, prefix="", out=None) -> dict:
    """Map dotted key paths to 1-based source lines."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k_node, v_node in node.value:
            path = f"{prefix}.{k_node.value}" if prefix else str(k_node.value)
            out[path] = k_node.start_mark.line + 1
            _line_index(v_node, path, out)
    return out


def _check_keys(section: dict, allowed: set, prefix: str, lines: dict) -> None:
    for key in section:
        if key not in allowed:
            path = f"{prefix}.{key}" if prefix else key
            raise ConfigParseError("unknown key", key=path, line=lines.get(path))


def _section(raw: dict, key: str, lines: dict) -> dict:
    value = raw.get(key) or {}
    if not isinstance(value, dict):
        raise ConfigParseError("expected a mapping", key=key, line=lines.get(key))
    return value


def _build(factory, kwargs: dict, key: str, lines: dict):
    try:
        return factory(**kwargs)
    except TypeError as exc:
        raise ConfigParseError(f"invalid fields: {exc}", key=key, line=lines.get(key)) from exc
    except AdmitLearnError as exc:
        raise ConfigParseError(str(exc), key=key, line=lines.get(key)) from exc


def parse_suite(text: str, source: Optional[str] = None, base_dir: Optional[Path] = None) -> SuiteConfig:
    """Parse and validate suite YAML text."""
    try:
        root = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigParseError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                               line=mark.line + 1 if mark else None) from exc
    if not isinstance(raw, dict):
        raise ConfigParseError("suite config must be a mapping at the top level")
    lines = _line_index(root)
    _check_keys(raw, _TOP_KEYS, "", lines)

    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigParseError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}",
                               key="schema_version", line=lines.get("schema_version"))
    task = raw.get("task")
    if task not in TASKS:
        raise ConfigParseError(f"task must be one of {TASKS}", key="task", line=lines.get("task"))

    geometry = _build(Geometry, _section(raw, "geometry", lines), "geometry", lines)
    env = _section(raw, "env", lines)
    _check_keys(env, {"sim", "real"}, "env", lines)
    sim_kw = env.get("sim") or {}
    real_kw = env.get("real") or {}
    _check_keys(sim_kw, _ENV_KEYS, "env.sim", lines)
    _check_keys(real_kw, _ENV_KEYS, "env.real", lines)
    seed = raw.get("seed", 0)
    sim = _build(EnvConfig, dict(sim_kw, task=task, geometry=geometry, seed=seed), "env.sim", lines)
    real = _build(sim.perturbed, dict(real_kw), "env.real", lines)

    methods = tuple(raw.get("methods", METHODS))
    for m in methods:
        if m not in METHODS:
            raise ConfigParseError(f"unknown method {m!r}", key="methods", line=lines.get("methods"))
    if len(methods) > 1 and real == sim:
        raise ConfigParseError("method comparison needs a real variant that differs from sim",
                               key="env.real", line=lines.get("env.real") or lines.get("env"))

    adaptation = _section(raw, "adaptation", lines)
    _check_keys(adaptation, _ADAPT_KEYS, "adaptation", lines)
    adapt_kw = {k: v for k, v in adaptation.items() if k != "w"}
    if "w" in adaptation:
        adapt_kw["weights"] = _build(CostWeights, {"w": adaptation["w"]}, "adaptation.w", lines)
    _build(AdaptationConfig, adapt_kw, "adaptation", lines)
    plan = _build(PlanSettings, _section(raw, "plan", lines), "plan", lines)
    search_kw = dict(_section(raw, "gain_search", lines))
    for key in ("k_bounds", "m_bounds", "d_bounds", "seeds"):
        if key in search_kw:
            search_kw[key] = tuple(search_kw[key])
    gain_search = _build(GainSearchConfig, search_kw, "gain_search", lines)

    gains = raw.get("gains")
    if gains is not None:
        path = Path(gains)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        if not path.exists():
            raise ConfigParseError(f"gain file {gains} does not exist", key="gains", line=lines.get("gains"))
        gains = str(path)

    start = raw.get("start")
    try:
        cfg = SuiteConfig(
            suite=str(raw.get("suite", task)), task=task, sim=sim, real=real, plan=plan,
            episodes=int(raw.get("episodes", 10)), seed=int(seed), dt=float(raw.get("dt", 0.01)),
            timeout=float(raw.get("timeout", 60.0)),
            start=tuple(float(v) for v in start) if start is not None else None,
            methods=methods, adaptation=dict(adaptation), gain_search=gain_search, gains=gains,
            workers=int(raw.get("workers", 1)), source=source,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigParseError(f"invalid value: {exc}") from exc
    if cfg.episodes < 1:
        raise ConfigParseError("episodes must be at least 1", key="episodes", line=lines.get("episodes"))
    if not cfg.dt > 0 or not cfg.timeout > 0:
        raise ConfigParseError("dt and timeout must be positive")
    if cfg.workers < 1:
        raise ConfigParseError("workers must be at least 1", key="workers", line=lines.get("workers"))
    return cfg


def load_suite(path) -> SuiteConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_suite(text, source=str(path), base_dir=path.parent)


def packaged_config(name: str) -> Path:
    """Path of a bundled suite config (``wall``, ``peg`` or ``pivot``)."""
    path = Path(__file__).parent / "configs" / f"{name}.yaml"
    if not path.exists():
        raise ConfigError(f"no bundled config named {name!r}")
    return path


def resolve_config(ref: Any) -> Path:
    """Accept a file path or the name of a bundled config."""
    path = Path(ref)
    if path.exists():
        return path
    return packaged_config(str(ref))
