"""Closed-loop execution with periodic residual re-optimization of the gains.

The control loop runs at ``1 / dt``. Each step it commands ``x_c = x_d + e``,
lets the environment react, reads the (noisy, clipped, possibly delayed)
force sensor, records the reading and integrates the admittance error
dynamics. Every ``period`` seconds it snapshots the last window of forces,
solves the residual problem from the error state at the window start and
publishes the recovered gains for the next control step.
"""

from __future__ import annotations

import csv
import logging
import threading
from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .admittance import AdmittanceParams, ErrorState, ParamVector, error_accel, recover_gains, to_param_vector
from .cost import CostWeights
from .envs import EnvConfig, EpisodeMonitor, EpisodeOutcome, env_step, initial_state, sensor_read
from .errors import ConfigError
from .forces import ForceWindow, fit_linear_force_or_fallback
from .optimizer import DEFAULT_BUDGET, DEFAULT_EPS, DEFAULT_TRUST_RATIO, OptProblem, OptResult, optimize_residual
from .trajectories import TrajectoryPlan

log = logging.getLogger(__name__)

FORCE_SOURCES = ("record_replay", "linear_fit")


@dataclass(frozen=True)
class AdaptationConfig:
    enabled: bool = True
    period: float = 1.0
    weights: CostWeights = field(default_factory=CostWeights)
    budget: int = DEFAULT_BUDGET
    eps: float = DEFAULT_EPS
    trust_ratio: float = DEFAULT_TRUST_RATIO
    force_source: str = "record_replay"
    concurrent: bool = False

    def __post_init__(self):
        if not self.period > 0:
            raise ConfigError("adaptation period must be positive")
        if self.force_source not in FORCE_SOURCES:
            raise ConfigError(f"force_source must be one of {FORCE_SOURCES}")


@dataclass
class UpdateRecord:
    t: float
    cost_before: float
    cost_after: float
    delta_u: list
    evaluations: int
    converged: bool
    params: dict
    error: Optional[str] = None

    def as_dict(self) -> dict:
        return dict(self.__dict__)


class GainSlot:
    """Current controller parameters; publishing swaps them atomically."""

    def __init__(self, params: AdmittanceParams):
        self._lock = threading.Lock()
        self._params = params
        self._u = to_param_vector(params)

    def read(self) -> tuple[AdmittanceParams, ParamVector]:
        with self._lock:
            return self._params, self._u

    def publish(self, u: ParamVector) -> AdmittanceParams:
        params = recover_gains(u)
        with self._lock:
            self._params, self._u = params, u
        return params


@dataclass
class EpisodeTrace:
    """Per-step signals of one episode plus optimizer telemetry."""

    task: str
    dt: float
    t: np.ndarray
    x_d: np.ndarray
    x_c: np.ndarray
    f_raw: np.ndarray
    f_meas: np.ndarray
    m: np.ndarray
    k: np.ndarray
    d: np.ndarray
    cum_cost: np.ndarray
    angle: np.ndarray
    in_contact: np.ndarray
    updates: list
    outcome: EpisodeOutcome

    def separations_after(self, t0: float) -> int:
        """Contact-to-separation transitions strictly after time ``t0``."""
        contact = self.in_contact
        drops = np.flatnonzero(contact[:-1] & ~contact[1:]) + 1
        return int(np.sum(self.t[drops] > t0))

    def peak_force_after(self, t0: float) -> float:
        mask = self.t > t0
        if not np.any(mask):
            return 0.0
        return float(np.max(np.linalg.norm(self.f_raw[mask], axis=1)))

    def first_update_time(self) -> Optional[float]:
        return self.updates[0].t if self.updates else None

    def to_csv(self, path) -> Path:
        path = Path(path)
        n = self.x_d.shape[1]
        header = ["t"]
        for prefix in ("x_d", "x_c", "f_raw", "f_meas", "m", "k", "d"):
            header += [f"{prefix}_{i}" for i in range(n)]
        header += ["angle", "in_contact", "cum_cost"]
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(self.t.size):
                row = [self.t[i]]
                for arr in (self.x_d, self.x_c, self.f_raw, self.f_meas, self.m, self.k, self.d):
                    row += list(arr[i])
                row += [self.angle[i], int(self.in_contact[i]), self.cum_cost[i]]
                writer.writerow([repr(float(v)) for v in row])
        return path


def _solve(problem: OptProblem, optimizer: Callable[[OptProblem], OptResult]) -> OptResult:
    result = optimizer(problem)
    if result.cost_after > result.cost_before:
        raise RuntimeError("optimizer returned a worse point than its start")
    return result


def adaptation_loop(
    env_cfg: EnvConfig,
    plan: TrajectoryPlan,
    params: AdmittanceParams,
    adapt: Optional[AdaptationConfig] = None,
    seed: int = 0,
    optimizer: Callable[[OptProblem], OptResult] = optimize_residual,
    start_pose: Optional[np.ndarray] = None,
) -> EpisodeTrace:
    """Run one episode; with ``adapt.enabled`` false this is a fixed-gain rollout.

    Optimizer exceptions keep the previous gains; the event is logged and
    stored in the update record.
    """
    adapt = adapt or AdaptationConfig(enabled=False)
    dt = plan.dt
    n = plan.pos.shape[1]
    if n != env_cfg.n_axes or params.n != n:
        raise ConfigError("plan, environment and gains disagree on the axis count")
    rng = np.random.default_rng(seed)
    period_steps = max(1, int(round(adapt.period / dt)))
    n_steps = len(plan)

    state = initial_state(env_cfg, plan.pos[0] if start_pose is None else start_pose)
    monitor = EpisodeMonitor(env_cfg)
    slot = GainSlot(params)
    window = ForceWindow(period_steps, dt, n)
    window_states: deque = deque(maxlen=period_steps)
    window_pose: deque = deque(maxlen=period_steps)
    window_desired: deque = deque(maxlen=period_steps)
    delayed: deque = deque(maxlen=env_cfg.latency_steps + 1)
    e = np.zeros(n)
    e_dot = np.zeros(n)

    t_arr = np.arange(n_steps) * dt
    x_c_arr = np.empty((n_steps, n))
    f_raw_arr = np.empty((n_steps, n))
    f_meas_arr = np.empty((n_steps, n))
    gains = np.empty((3, n_steps, n))
    cum_cost = np.empty(n_steps)
    angle = np.empty(n_steps)
    contact = np.empty(n_steps, dtype=bool)
    updates: list = []
    w = adapt.weights.w
    running = 0.0

    executor = ThreadPoolExecutor(max_workers=1) if adapt.enabled and adapt.concurrent else None
    pending: Optional[tuple[float, ParamVector, Future]] = None

    def finish(t_update: float, fut_result: OptResult, u_base: ParamVector) -> None:
        u_new = fut_result.u(u_base)
        new_params = slot.publish(u_new)
        updates.append(UpdateRecord(
            t=t_update, cost_before=fut_result.cost_before, cost_after=fut_result.cost_after,
            delta_u=fut_result.delta_u.tolist(), evaluations=fut_result.evaluations,
            converged=fut_result.converged, params=new_params.as_dict()))

    def fail(t_update: float, exc: Exception) -> None:
        log.warning("gain update at t=%.2f failed: %s; keeping previous gains", t_update, exc)
        current, _ = slot.read()
        updates.append(UpdateRecord(t=t_update, cost_before=float("nan"), cost_after=float("nan"),
                                    delta_u=[], evaluations=0, converged=False,
                                    params=current.as_dict(), error=str(exc)))

    try:
        for k in range(n_steps):
            current, u = slot.read()
            x_c = plan.pos[k] + e
            v_c = plan.vel[k] + e_dot
            state, f_raw = env_step(state, env_cfg, x_c, v_c, dt)
            delayed.append(f_raw)
            f_meas = sensor_read(delayed[0], env_cfg, rng)
            window.record(t_arr[k], f_meas)
            window_states.append(ErrorState(e.copy(), e_dot.copy()))
            window_pose.append((x_c, v_c))
            window_desired.append((plan.pos[k], plan.vel[k]))
            monitor.update(t_arr[k], state, f_raw)

            x_c_arr[k], f_raw_arr[k], f_meas_arr[k] = x_c, f_raw, f_meas
            gains[0, k], gains[1, k], gains[2, k] = current.m, current.k, current.d
            running += t_arr[k] * (w * np.abs(e).sum() + (1 - w) * np.abs(e_dot).sum()) * dt
            cum_cost[k] = running
            angle[k] = state.angle
            contact[k] = any(c in ("surface", "object", "hole_wall", "hole_bottom") for c in state.contacts)

            acc = error_accel(e, e_dot, f_meas, u.inv_m, u.k_norm, u.d_norm)
            e_dot = e_dot + dt * acc
            e = e + dt * e_dot

            if pending is not None and pending[2].done():
                t_up, u_base, fut = pending
                pending = None
                try:
                    finish(t_up, fut.result(), u_base)
                except Exception as exc:  # noqa: BLE001 - degrade gracefully
                    fail(t_up, exc)

            if adapt.enabled and (k + 1) % period_steps == 0 and k + 1 < n_steps:
                t_up = t_arr[k]
                try:
                    problem = _build_problem(adapt, slot.read()[1], window, window_states,
                                             window_pose, window_desired, dt)
                except Exception as exc:  # noqa: BLE001
                    fail(t_up, exc)
                    continue
                if executor is not None:
                    if pending is None:
                        pending = (t_up, problem.u_init, executor.submit(_solve, problem, optimizer))
                    continue
                try:
                    finish(t_up, _solve(problem, optimizer), problem.u_init)
                except Exception as exc:  # noqa: BLE001
                    fail(t_up, exc)
        if pending is not None:
            # A solve still running at the end is recorded but never acts on the episode.
            t_up, u_base, fut = pending
            try:
                finish(t_up, fut.result(), u_base)
            except Exception as exc:  # noqa: BLE001
                fail(t_up, exc)
    finally:
        if executor is not None:
            executor.shutdown(wait=True)

    return EpisodeTrace(
        task=env_cfg.task, dt=dt, t=t_arr, x_d=plan.pos.copy(), x_c=x_c_arr,
        f_raw=f_raw_arr, f_meas=f_meas_arr, m=gains[0], k=gains[1], d=gains[2],
        cum_cost=cum_cost, angle=angle, in_contact=contact, updates=updates,
        outcome=monitor.outcome(),
    )


def _build_problem(adapt, u, window, window_states, window_pose, window_desired, dt) -> OptProblem:
    snap = window.snapshot()
    x0 = window_states[0]
    kwargs = dict(u_init=u, x0=x0, window=snap, dt=dt, weights=adapt.weights, eps=adapt.eps,
                  budget=adapt.budget, trust_ratio=adapt.trust_ratio)
    if adapt.force_source == "linear_fit":
        x = np.array([p for p, _ in window_pose])
        xv = np.array([v for _, v in window_pose])
        model, degenerate = fit_linear_force_or_fallback(snap, x, xv)
        if degenerate:
            log.info("linear force fit is rank deficient; using ridge fallback")
        kwargs.update(force_model=model,
                      desired_pos=np.array([p for p, _ in window_desired]),
                      desired_vel=np.array([v for _, v in window_desired]))
    return OptProblem(**kwargs)
