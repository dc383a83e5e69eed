"""Batch runner for method comparisons, weight sweeps and force-model studies.

Outputs are deterministic functions of the suite config and seed. Completion
times are simulated seconds and only successful episodes enter the time
statistics; a method without successes reports ``None`` (``N/A`` in CSV).
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .adaptation import AdaptationConfig, EpisodeTrace, adaptation_loop
from .admittance import AdmittanceParams
from .config import SuiteConfig
from .cost import CostWeights
from .envs import EnvConfig
from .forces import ForceSnapshot, fit_linear_force_or_fallback, predict_linear_force
from .offline import GainScenario, cem_gain_search, load_gain_file, manual_gains, save_gain_file
from .trajectories import PlanSettings, scripted_trajectory

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("method", "scenario", "successes", "total", "time_mean", "time_std",
                  "force_mean", "force_std", "separations_mean")
TIME_BASIS = "simulated seconds"


@dataclass(frozen=True)
class Scenario:
    """One method evaluated on one suite: what runs, where and how often."""

    id: str
    task: str
    env: EnvConfig
    method: str
    params: AdmittanceParams
    adaptation: AdaptationConfig
    plan: PlanSettings
    episodes: int
    seed: int
    dt: float
    timeout: float
    start: Optional[tuple] = None


@dataclass
class ResultRow:
    method: str
    scenario: str
    successes: int
    total: int
    time_mean: Optional[float]
    time_std: Optional[float]
    force_mean: float
    force_std: float
    separations_mean: float

    def __post_init__(self):
        if not 0 <= self.successes <= self.total:
            raise ValueError("success count must lie in [0, total]")

    @property
    def success_rate(self) -> float:
        return self.successes / self.total

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def summarize(method: str, scenario: str, records: Sequence[dict]) -> ResultRow:
    times = [r["completion_time"] for r in records if r["success"]]
    forces = [r["max_force"] for r in records if np.isfinite(r["max_force"])]
    seps = [r["separations"] for r in records]
    return ResultRow(
        method=method, scenario=scenario, successes=sum(bool(r["success"]) for r in records),
        total=len(records),
        time_mean=float(np.mean(times)) if times else None,
        time_std=float(np.std(times)) if times else None,
        force_mean=float(np.mean(forces)) if forces else float("nan"),
        force_std=float(np.std(forces)) if forces else float("nan"),
        separations_mean=float(np.mean(seps)) if seps else 0.0,
    )


def episode_seed(base: int, index: int) -> int:
    return base * 1000 + index


def _start_pose(sc: Scenario, seed: int):
    return GainScenario(sc.env, sc.plan, sc.start, sc.dt).start_pose(seed)


def run_episode(sc: Scenario, index: int, trace_dir: Optional[str] = None) -> dict:
    """Run one episode; any exception marks it failed instead of aborting."""
    seed = episode_seed(sc.seed, index)
    record = {"method": sc.method, "episode": index, "seed": seed, "success": False,
              "completion_time": None, "max_force": float("nan"), "separations": 0,
              "updates": 0, "update_failures": 0, "monotone": True, "error": None}
    try:
        plan_settings = sc.plan
        if plan_settings.duration > sc.timeout:
            plan_settings = dataclasses.replace(plan_settings, duration=sc.timeout)
        plan = scripted_trajectory(sc.task, sc.env.geometry, _start_pose(sc, seed), plan_settings, sc.dt)
        trace = adaptation_loop(sc.env, plan, sc.params, sc.adaptation, seed=seed)
    except Exception as exc:  # noqa: BLE001 - one bad episode must not stop a suite
        log.warning("episode %s/%d crashed: %s", sc.method, index, exc)
        record["error"] = f"{type(exc).__name__}: {exc}"
        return record
    out = trace.outcome
    ok = [u for u in trace.updates if u.error is None]
    record.update(success=out.success, completion_time=out.completion_time, max_force=out.max_force,
                  separations=out.separations, updates=len(ok),
                  update_failures=len(trace.updates) - len(ok),
                  monotone=all(u.cost_after <= u.cost_before for u in ok))
    if trace_dir is not None:
        trace.to_csv(Path(trace_dir) / f"{sc.id}_{sc.method}_{index:03d}.csv")
    return record


def _job(args):
    return run_episode(*args)


def run_scenario(sc: Scenario, trace_dir=None, workers: int = 1) -> list:
    """All episodes of a scenario, ordered by episode index."""
    jobs = [(sc, i, trace_dir) for i in range(sc.episodes)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_job, jobs))
    return [_job(j) for j in jobs]


def adaptation_config(cfg: SuiteConfig, enabled: bool = True, **overrides) -> AdaptationConfig:
    raw = dict(cfg.adaptation)
    raw.update(overrides)
    w = float(raw.pop("w", 0.4))
    raw.pop("enabled", None)
    return AdaptationConfig(enabled=enabled, weights=CostWeights(w=w), **raw)


def offline_gains(cfg: SuiteConfig, out_dir=None) -> tuple[AdmittanceParams, dict]:
    """Gains learned in the nominal sim: loaded from ``cfg.gains`` or searched now."""
    if cfg.gains is not None:
        params, doc = load_gain_file(cfg.gains)
        return params, {"source": "file", "provenance": doc.get("provenance", {})}
    scenario = GainScenario(cfg.sim, cfg.plan, cfg.start, cfg.dt)
    result = cem_gain_search(cfg.gain_search, scenario)
    info = {"source": "search", "score": result.score, "initial_score": result.initial_score,
            "warning": result.warning, "evaluations": result.evaluations}
    if out_dir is not None:
        save_gain_file(Path(out_dir) / "gains.json", cfg.task, result.params, cfg.gain_search.rng_seed,
                       {"sim": cfg.sim, "plan": cfg.plan, "search": cfg.gain_search, "start": cfg.start})
    return result.params, info


def method_scenario(cfg: SuiteConfig, method: str, learned: AdmittanceParams, **adapt_overrides) -> Scenario:
    if method == "manual_tune":
        params, enabled = manual_gains(cfg.task), False
    elif method == "direct_transfer":
        params, enabled = learned, False
    else:
        params, enabled = learned, True
    return Scenario(id=cfg.suite, task=cfg.task, env=cfg.real, method=method, params=params,
                    adaptation=adaptation_config(cfg, enabled, **adapt_overrides), plan=cfg.plan,
                    episodes=cfg.episodes, seed=cfg.seed, dt=cfg.dt, timeout=cfg.timeout, start=cfg.start)


@dataclass
class SuiteResult:
    rows: list
    episodes: list
    gains: dict
    meta: dict

    def row(self, method: str) -> ResultRow:
        return next(r for r in self.rows if r.method == method)

    def as_dict(self) -> dict:
        return {"meta": self.meta, "gains": self.gains,
                "rows": [r.as_dict() for r in self.rows], "episodes": self.episodes}


def _prepare_out(out_dir) -> Optional[Path]:
    if out_dir is None:
        return None
    out = Path(out_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    return out


def _meta(cfg: SuiteConfig, kind: str) -> dict:
    return {"schema_version": 1, "kind": kind, "suite": cfg.suite, "task": cfg.task,
            "episodes": cfg.episodes, "seed": cfg.seed, "time_basis": TIME_BASIS}


def _gain_dict(p: AdmittanceParams) -> dict:
    return {"m": p.m.tolist(), "k": p.k.tolist(), "d": p.d.tolist()}


def run_suite(cfg: SuiteConfig, out_dir=None, traces: bool = True) -> SuiteResult:
    """Evaluate every configured method in the perturbed environment."""
    out = _prepare_out(out_dir)
    learned, info = offline_gains(cfg, out)
    rows, episodes = [], []
    for method in cfg.methods:
        sc = method_scenario(cfg, method, learned)
        records = run_scenario(sc, str(out / "traces") if out is not None and traces else None, cfg.workers)
        episodes.extend(records)
        rows.append(summarize(method, cfg.suite, records))
    gains = {"learned": _gain_dict(learned), "search": info}
    if cfg.task in ("assembly", "pivot"):
        gains["manual"] = _gain_dict(manual_gains(cfg.task))
    result = SuiteResult(rows=rows, episodes=episodes, gains=gains, meta=_meta(cfg, "suite"))
    if out is not None:
        write_results(result, out, "results")
    return result


def weight_sweep(cfg: SuiteConfig, ws: Sequence[float], out_dir=None) -> SuiteResult:
    """Proposed method at each cost weight ``w``; one row per weight."""
    for w in ws:
        CostWeights(w=float(w))  # validates the range before any episode runs
    out = _prepare_out(out_dir)
    learned, info = offline_gains(cfg, out)
    rows, episodes = [], []
    for w in ws:
        sc = method_scenario(cfg, "proposed", learned, w=float(w))
        records = run_scenario(sc, None, cfg.workers)
        for r in records:
            r["w"] = float(w)
        episodes.extend(records)
        row = summarize("proposed", f"{cfg.suite}@w={float(w):g}", records)
        rows.append(row)
    result = SuiteResult(rows=rows, episodes=episodes, gains={"learned": _gain_dict(learned), "search": info},
                         meta=dict(_meta(cfg, "weight_sweep"), weights=[float(w) for w in ws]))
    if out is not None:
        write_results(result, out, "sweep")
    return result


def linear_fit_generalization(trace: EpisodeTrace, period: float, t_end: float,
                              peak_fraction: float = 0.5) -> dict:
    """Fit ``f = a x + b x_dot + c`` on ``(t_end - period, t_end]`` and score the next window.

    The next-window error is taken over its peak-force region: samples whose
    force norm reaches ``peak_fraction`` of that window's maximum.

    Returns:
        Mean absolute errors in the fit window, over the whole next window and
        over the next window's peak-force region, plus their ratio.
    """
    v = np.zeros_like(trace.x_c)
    v[:-1] = np.diff(trace.x_c, axis=0) / trace.dt
    fit = (trace.t > t_end - period - 1e-9) & (trace.t <= t_end + 1e-9)
    nxt = (trace.t > t_end + 1e-9) & (trace.t <= t_end + period + 1e-9)
    snap = ForceSnapshot(t=trace.t[fit].copy(), f=trace.f_meas[fit].copy(), dt=trace.dt)
    model, degenerate = fit_linear_force_or_fallback(snap, trace.x_c[fit], v[fit])
    err_in = np.abs(predict_linear_force(model, trace.x_c[fit], v[fit]) - trace.f_meas[fit]).sum(axis=1)
    f_next = trace.f_meas[nxt]
    err_next = np.abs(predict_linear_force(model, trace.x_c[nxt], v[nxt]) - f_next).sum(axis=1)
    norm = np.linalg.norm(f_next, axis=1)
    peak = norm >= peak_fraction * norm.max() if norm.size else norm.astype(bool)
    in_mae = float(err_in.mean())
    peak_mae = float(err_next[peak].mean()) if np.any(peak) else float("nan")
    return {"in_window_mae": in_mae, "next_window_mae": float(err_next.mean()),
            "next_peak_mae": peak_mae, "ratio": peak_mae / in_mae if in_mae > 0 else float("inf"),
            "t_end": float(t_end), "degenerate": bool(degenerate)}


def compare_force_models(cfg: SuiteConfig, out_dir=None) -> dict:
    """Adapt with replayed forces and with a fitted linear model; report stability metrics."""
    out = _prepare_out(out_dir)
    learned, info = offline_gains(cfg, out)
    report = {"meta": _meta(cfg, "force_models"), "gains": {"learned": _gain_dict(learned)}, "methods": {}}
    for source in ("record_replay", "linear_fit"):
        sc = method_scenario(cfg, "proposed", learned, force_source=source)
        per_episode = []
        for i in range(cfg.episodes):
            seed = episode_seed(cfg.seed, i)
            plan = scripted_trajectory(cfg.task, cfg.real.geometry, _start_pose(sc, seed), cfg.plan, cfg.dt)
            trace = adaptation_loop(cfg.real, plan, learned, sc.adaptation, seed=seed)
            t0 = trace.first_update_time()
            t0 = trace.t[-1] if t0 is None else t0
            per_episode.append({"separations_after_update": trace.separations_after(t0),
                                "max_force_after_update": trace.peak_force_after(t0),
                                "max_force": trace.outcome.max_force,
                                "success": trace.outcome.success})
        report["methods"][source] = {
            "episodes": per_episode,
            "separations_after_update_max": max(e["separations_after_update"] for e in per_episode),
            "max_force_mean": float(np.mean([e["max_force"] for e in per_episode])),
        }
    fixed = method_scenario(cfg, "direct_transfer", learned)
    seed = episode_seed(cfg.seed, 0)
    plan = scripted_trajectory(cfg.task, cfg.real.geometry, _start_pose(fixed, seed), cfg.plan, cfg.dt)
    trace = adaptation_loop(cfg.real, plan, learned, fixed.adaptation, seed=seed)
    period = fixed.adaptation.period
    report["linear_fit_generalization"] = linear_fit_generalization(trace, period, period)
    if out is not None:
        (out / "forces.json").write_text(_dumps(report))
    return report


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, default=_default) + "\n"


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if dataclasses.is_dataclass(obj):
        return dataclasses.asdict(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _cell(v):
    if v is None:
        return "N/A"
    if isinstance(v, float):
        return repr(v)
    return v


def write_results(result: SuiteResult, out: Path, stem: str) -> None:
    (out / f"{stem}.json").write_text(_dumps(result.as_dict()))
    with (out / f"{stem}.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for row in result.rows:
            d = row.as_dict()
            writer.writerow([_cell(d[c]) for c in RESULT_COLUMNS])


def format_table(rows: Sequence[dict]) -> str:
    """Plain-text table: success, time (mean +- std) and max force per row."""
    def pm(mean, std, digits):
        if mean is None:
            return "N/A"
        return f"{mean:.{digits}f} +- {std:.{digits}f}"

    header = f"{'method':<16} {'scenario':<16} {'success':>8} {'time [s]':>16} {'max force [N]':>18}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(f"{r['method']:<16} {r['scenario']:<16} {r['successes']:>4}/{r['total']:<3} "
                     f"{pm(r['time_mean'], r['time_std'], 2):>16} {pm(r['force_mean'], r['force_std'], 1):>18}")
    return "\n".join(lines)


def load_report(out_dir) -> str:
    """Render every results file found in ``out_dir`` as text tables."""
    out = Path(out_dir)
    parts = []
    for stem in ("results", "sweep"):
        path = out / f"{stem}.json"
        if path.exists():
            doc = json.loads(path.read_text())
            parts.append(f"[{stem}] {doc['meta']['suite']} ({doc['meta']['time_basis']})")
            parts.append(format_table(doc["rows"]))
    forces = out / "forces.json"
    if forces.exists():
        doc = json.loads(forces.read_text())
        parts.append("[forces]")
        for name, m in doc["methods"].items():
            parts.append(f"{name:<16} separations after update (max) {m['separations_after_update_max']}, "
                         f"mean max force {m['max_force_mean']:.1f} N")
        g = doc["linear_fit_generalization"]
        parts.append(f"linear fit MAE in window {g['in_window_mae']:.3f} N, "
                     f"next-window peak region {g['next_peak_mae']:.3f} N (ratio {g['ratio']:.2f})")
    if not parts:
        raise FileNotFoundError(f"no results found in {out}")
    return "\n".join(parts)
