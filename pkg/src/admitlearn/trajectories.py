"""Scripted desired trajectories for the wall, assembly and pivot tasks.

Plans are pure kinematics: they depend on the start pose and nominal geometry
only, never on environment stiffness or friction. Velocities are forward
differences of the sampled positions and accelerations forward differences of
the velocities, so a plan is kinematically consistent by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .envs import Geometry
from .errors import ConfigError


@dataclass(frozen=True)
class TrajectoryPlan:
    task: str
    dt: float
    pos: np.ndarray  # (N, n)
    vel: np.ndarray
    acc: np.ndarray

    def __post_init__(self):
        for a in (self.pos, self.vel, self.acc):
            if a.shape != self.pos.shape:
                raise ConfigError("plan arrays must share a shape")
            if not np.all(np.isfinite(a)):
                raise ConfigError("plan contains non-finite samples")

    def __len__(self) -> int:
        return self.pos.shape[0]

    @property
    def duration(self) -> float:
        return len(self) * self.dt

    def consistency_error(self) -> float:
        """Max gap between stored velocity and the finite difference of position."""
        if len(self) < 2:
            return 0.0
        fd = np.diff(self.pos, axis=0) / self.dt
        return float(np.max(np.abs(fd - self.vel[:-1])))


@dataclass(frozen=True)
class PlanSettings:
    """Timing and shape knobs shared by the scripted plans (SI units)."""

    duration: float = 6.0
    approach_speed: float = 0.1
    press_depth: float = 0.004
    lateral_move_time: float = 0.5
    search_amplitude: float = 0.004
    search_period: float = 1.2
    insert_start: float = 3.5
    insert_time: float = 1.0
    settle_time: float = 0.3
    push_time: float = 3.0
    push_past_wall: float = 0.02


def _from_positions(task: str, pos: np.ndarray, dt: float) -> TrajectoryPlan:
    vel = np.zeros_like(pos)
    vel[:-1] = np.diff(pos, axis=0) / dt
    acc = np.zeros_like(pos)
    acc[:-1] = np.diff(vel, axis=0) / dt
    return TrajectoryPlan(task=task, dt=dt, pos=pos, vel=vel, acc=acc)


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)


def _linear_descent(t, t0, z_from, z_to, speed):
    """Constant-speed move from ``z_from`` to ``z_to`` starting at ``t0``."""
    travel = abs(z_to - z_from)
    if travel == 0:
        return np.full_like(t, z_from)
    s = np.clip((t - t0) * speed / travel, 0.0, 1.0)
    return z_from + (z_to - z_from) * s


def wall_plan(start, geometry: Geometry, settings: PlanSettings, dt: float) -> TrajectoryPlan:
    """Descend at constant speed onto the surface and hold a small press depth."""
    t = np.arange(int(round(settings.duration / dt))) * dt
    z0 = float(np.atleast_1d(start)[0])
    target = geometry.surface - settings.press_depth
    z = _linear_descent(t, 0.0, z0, target, settings.approach_speed)
    return _from_positions("wall", z[:, None], dt)


def assembly_plan(start, geometry: Geometry, settings: PlanSettings, dt: float) -> TrajectoryPlan:
    """Move beside the hole, touch down, sweep across it while pressing, then insert.

    The sweep keeps oscillating while the insertion starts, so the plan never
    needs to know when the peg actually dropped in; its amplitude fades out
    over the insertion so the plan ends centred on the hole.
    """
    x0, z0 = (float(v) for v in start)
    t = np.arange(int(round(settings.duration / dt))) * dt
    side = 1.0 if x0 >= geometry.hole_x else -1.0
    x_touch = geometry.hole_x + side * settings.search_amplitude
    lateral = x0 + (x_touch - x0) * _smoothstep(t / settings.lateral_move_time)

    press = geometry.surface - settings.press_depth
    z = _linear_descent(t, settings.lateral_move_time, z0, press, settings.approach_speed)
    contact_t = settings.lateral_move_time + abs(z0 - geometry.surface) / settings.approach_speed
    phase = 2.0 * np.pi * np.clip(t - contact_t, 0.0, None) / settings.search_period
    insert = _smoothstep((t - settings.insert_start) / settings.insert_time)
    sweep = side * settings.search_amplitude * (1.0 - insert) * np.cos(phase)
    x = np.where(t < contact_t, lateral, geometry.hole_x + sweep)

    deep = geometry.surface - geometry.hole_depth
    z = np.where(t < settings.insert_start, z, press + (deep - press) * insert)
    return _from_positions("assembly", np.column_stack([x, z]), dt)


def pivot_plan(start, geometry: Geometry, settings: PlanSettings, dt: float) -> TrajectoryPlan:
    """Approach the bar's foot, settle into contact, then push it to the wall."""
    x0, z0 = (float(v) for v in start)
    t = np.arange(int(round(settings.duration / dt))) * dt
    foot = geometry.object_length * np.cos(geometry.initial_angle)
    press_x = foot - settings.press_depth
    x = _linear_descent(t, 0.0, x0, press_x, settings.approach_speed)
    push_start = abs(x0 - press_x) / settings.approach_speed + settings.settle_time
    s = _smoothstep((t - push_start) / settings.push_time)
    x = np.where(t < push_start, x, press_x + (-settings.push_past_wall - press_x) * s)
    z = np.full_like(t, z0)
    return _from_positions("pivot", np.column_stack([x, z]), dt)


_PLANNERS = {"wall": wall_plan, "assembly": assembly_plan, "pivot": pivot_plan}


def scripted_trajectory(
    task: str,
    geometry: Geometry,
    start,
    settings: Optional[PlanSettings] = None,
    dt: float = 0.01,
) -> TrajectoryPlan:
    """Build the scripted plan for ``task`` from ``start`` (task axes, meters)."""
    if task not in _PLANNERS:
        raise ConfigError(f"unknown task {task!r}")
    settings = settings or PlanSettings()
    start = np.atleast_1d(np.asarray(start, dtype=float))
    g = geometry
    if task == "assembly":
        if g.clearance <= 0 or g.hole_depth <= 0 or g.peg_width <= 0:
            raise ConfigError("assembly geometry needs positive clearance, hole depth and peg width")
        if start[1] <= g.surface:
            raise ConfigError("assembly must start above the surface")
    elif task == "pivot":
        if g.object_length <= 0 or not 0 < g.initial_angle < np.pi / 2:
            raise ConfigError("pivot geometry needs a positive length and a leaning angle in (0, pi/2)")
        if start[0] <= g.object_length * np.cos(g.initial_angle):
            raise ConfigError("pivot must start beyond the object's foot")
    elif start[0] <= g.surface:
        raise ConfigError("wall task must start above the surface")
    return _PLANNERS[task](start, geometry, settings, dt)
