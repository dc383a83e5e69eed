"""Offline gain search in the nominal simulator, plus the hand-tuned baseline table.

The cross-entropy search stands in for an RL-trained compliance policy: it
samples log-gains, runs fixed-gain episodes across a seed set and refits a
Gaussian to the elite candidates. In ``critical`` mode the mass is pinned to
one and damping follows the critical rule, so only the stiffness is searched.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .adaptation import adaptation_loop
from .admittance import AdmittanceParams, ParamVector, critical_damping, to_param_vector
from .envs import TASK_AXES, EnvConfig, planar_start, randomize_initial_pose, task_reward
from .errors import ConfigError
from .trajectories import PlanSettings, scripted_trajectory

log = logging.getLogger(__name__)

SEARCH_MODES = ("critical", "full")
DEFAULT_FORCE_PENALTY = 0.01
GAIN_FILE_VERSION = 1


@dataclass(frozen=True)
class GainSearchConfig:
    """Cross-entropy search settings; bounds are ``(low, high)`` in SI units."""

    population: int = 16
    elite_fraction: float = 0.25
    iterations: int = 6
    k_bounds: tuple = (10.0, 5000.0)
    m_bounds: tuple = (0.5, 5.0)
    d_bounds: tuple = (1.0, 500.0)
    seeds: tuple = (0, 1)
    mode: str = "critical"
    init_std: float = 1.0
    min_std: float = 0.05
    force_penalty: float = DEFAULT_FORCE_PENALTY
    rng_seed: int = 0

    def __post_init__(self):
        if self.mode not in SEARCH_MODES:
            raise ConfigError(f"mode must be one of {SEARCH_MODES}")
        if self.population < 1 or self.iterations < 0:
            raise ConfigError("population must be positive and iterations non-negative")
        if not 0 < self.elite_fraction <= 1:
            raise ConfigError("elite_fraction must lie in (0, 1]")
        for lo, hi in (self.k_bounds, self.m_bounds, self.d_bounds):
            if not 0 < lo <= hi:
                raise ConfigError("search bounds must be positive with low <= high")
        if not self.seeds:
            raise ConfigError("at least one evaluation seed is required")

    @property
    def n_elite(self) -> int:
        return max(1, min(self.population, int(round(self.population * self.elite_fraction))))


@dataclass(frozen=True)
class GainScenario:
    """What a candidate is scored on: environment, plan shape and start pose.

    ``start=None`` draws a randomized start pose per evaluation seed.
    """

    env: EnvConfig
    plan: PlanSettings = field(default_factory=PlanSettings)
    start: Optional[tuple] = None
    dt: float = 0.01

    def start_pose(self, seed: int) -> np.ndarray:
        if self.start is not None:
            return np.asarray(self.start, dtype=float)
        rng = np.random.default_rng(10_000 + seed)
        return planar_start(self.env.task, randomize_initial_pose(self.env.task, rng))


@dataclass
class GainSearchResult:
    params: AdmittanceParams
    u: ParamVector
    score: float
    initial_score: float
    history: list
    evaluations: int
    warning: bool = False


def evaluate_gains(params: AdmittanceParams, scenario: GainScenario, seeds: Sequence[int],
                   force_penalty: float = DEFAULT_FORCE_PENALTY) -> float:
    """Mean terminal reward minus ``force_penalty`` per newton of peak force.

    Episodes that raise or return non-finite values score ``-inf``.
    """
    scores = []
    for seed in seeds:
        try:
            start = scenario.start_pose(seed)
            plan = scripted_trajectory(scenario.env.task, scenario.env.geometry, start,
                                       scenario.plan, scenario.dt)
            trace = adaptation_loop(scenario.env, plan, params, seed=seed)
            state = _final_state(trace)
            score = task_reward(scenario.env, state) - force_penalty * trace.outcome.max_force
        except (ArithmeticError, ValueError) as exc:
            log.debug("candidate failed on seed %s: %s", seed, exc)
            score = -math.inf
        scores.append(score if math.isfinite(score) else -math.inf)
    return float(np.mean(scores))


def _final_state(trace):
    # The reward only reads the tool pose and, for pivoting, the bar angle.
    from .envs import EnvState

    return EnvState(pos=trace.x_c[-1], vel=np.zeros_like(trace.x_c[-1]), angle=float(trace.angle[-1]))


def _bounds(cfg: GainSearchConfig, n: int) -> tuple[np.ndarray, np.ndarray]:
    if cfg.mode == "critical":
        pairs = [cfg.k_bounds] * n
    else:
        pairs = [cfg.m_bounds] * n + [cfg.k_bounds] * n + [cfg.d_bounds] * n
    lo = np.log([p[0] for p in pairs])
    hi = np.log([p[1] for p in pairs])
    return lo, hi


def _decode(z: np.ndarray, cfg: GainSearchConfig, n: int) -> AdmittanceParams:
    g = np.exp(z)
    if cfg.mode == "critical":
        return AdmittanceParams.critically_damped(g, m=1.0)
    return AdmittanceParams(g[:n], g[n:2 * n], g[2 * n:])


def cem_gain_search(cfg: GainSearchConfig, scenario: GainScenario) -> GainSearchResult:
    """Cross-entropy search over log-gains; returns the final sampling mean.

    The initial mean is the log-midpoint of the bounds. If the final mean
    scores below the initial one, or every candidate failed, the best point
    seen is returned instead and ``warning`` is set for the all-failed case.
    """
    n = scenario.env.n_axes
    lo, hi = _bounds(cfg, n)
    rng = np.random.default_rng(cfg.rng_seed)
    mean = 0.5 * (lo + hi)
    std = np.minimum(cfg.init_std, 0.5 * (hi - lo)) if np.any(hi > lo) else np.zeros_like(lo)
    evaluations = 0

    def score(z):
        nonlocal evaluations
        evaluations += len(cfg.seeds)
        return evaluate_gains(_decode(z, cfg, n), scenario, cfg.seeds, cfg.force_penalty)

    initial_score = score(mean)
    best_z, best_score = mean.copy(), initial_score
    history = []
    any_finite = math.isfinite(initial_score)
    for _ in range(cfg.iterations):
        samples = np.clip(mean + std * rng.standard_normal((cfg.population, lo.size)), lo, hi)
        scores = np.array([score(z) for z in samples])
        any_finite |= bool(np.any(np.isfinite(scores)))
        order = np.argsort(-scores, kind="stable")
        elite = samples[order[:cfg.n_elite]]
        if scores[order[0]] > best_score:
            best_z, best_score = samples[order[0]].copy(), float(scores[order[0]])
        history.append(float(np.mean(scores[order[:cfg.n_elite]])))
        mean = elite.mean(axis=0)
        std = np.maximum(elite.std(axis=0), cfg.min_std) * (hi > lo)

    final_score = score(mean)
    warning = not any_finite
    if warning:
        log.warning("every gain candidate failed; returning the best point seen")
    if warning or final_score < initial_score:
        mean, final_score = best_z, best_score
    params = _decode(mean, cfg, n)
    return GainSearchResult(params=params, u=to_param_vector(params), score=float(final_score),
                            initial_score=float(initial_score), history=history,
                            evaluations=evaluations, warning=warning)


# Hand-tuned gains used on the hardware, per task: translational then rotational.
MANUAL_GAINS = {
    "assembly": {"m": [3.0] * 3 + [2.0] * 3, "k": [200.0] * 6, "d": [300.0] * 3 + [250.0] * 3},
    "pivot": {"m": [4.0] * 3 + [2.0] * 3, "k": [300.0] * 3 + [200.0] * 3, "d": [300.0] * 3 + [250.0] * 3},
}
_AXIS_INDEX = {"x": 0, "y": 1, "z": 2}


def manual_gains(task: str, full: bool = False) -> AdmittanceParams:
    """Hand-tuned gains; ``full`` returns all six axes, else the task's sim axes."""
    if task not in MANUAL_GAINS:
        raise ConfigError(f"no manually tuned gains for task {task!r}")
    table = MANUAL_GAINS[task]
    if full:
        return AdmittanceParams(table["m"], table["k"], table["d"])
    idx = [_AXIS_INDEX[a] for a in TASK_AXES[task]]
    return AdmittanceParams(*(np.asarray(table[key])[idx] for key in ("m", "k", "d")))


def is_overdamped(params: AdmittanceParams) -> np.ndarray:
    return params.d > critical_damping(params.m, params.k)


def load_baseline_gains(name: str, task: str = "assembly", gain_file=None, full: bool = False) -> AdmittanceParams:
    """``manual_tune`` reads the hand-tuned table; ``direct_transfer`` reads a saved search result."""
    if name == "manual_tune":
        return manual_gains(task, full=full)
    if name == "direct_transfer":
        if gain_file is None:
            raise ConfigError("direct_transfer needs a gain file produced by the offline search")
        return load_gain_file(gain_file)[0]
    raise ConfigError(f"unknown baseline {name!r}; expected manual_tune or direct_transfer")


def config_hash(payload) -> str:
    """Stable short hash of any JSON-serializable configuration."""
    blob = json.dumps(payload, sort_keys=True, default=_jsonable).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _jsonable(obj):
    if hasattr(obj, "__dataclass_fields__"):
        return asdict(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def save_gain_file(path, task: str, params: AdmittanceParams, seed: int, config) -> Path:
    path = Path(path)
    doc = {
        "version": GAIN_FILE_VERSION,
        "task": task,
        "axes": list(TASK_AXES.get(task, ())) or [f"axis{i}" for i in range(params.n)],
        "m": params.m.tolist(),
        "k": params.k.tolist(),
        "d": params.d.tolist(),
        "provenance": {"seed": int(seed), "config_hash": config_hash(config)},
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def load_gain_file(path) -> tuple[AdmittanceParams, dict]:
    """Read a gain file; returns the gains and the full document."""
    try:
        doc = json.loads(Path(path).read_text())
        params = AdmittanceParams(doc["m"], doc["k"], doc["d"])
    except FileNotFoundError as exc:
        raise ConfigError(f"gain file not found: {path}") from exc
    except (KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"malformed gain file {path}: {exc}") from exc
    if len(doc.get("axes", [])) not in (0, params.n):
        raise ConfigError("gain file axis labels disagree with the gain arrays")
    return params, doc
