"""Synthetic contact environments driven by a perfectly tracked compliant pose.

Three reductions are provided:

* ``wall``: one vertical axis pressing on a flat surface at ``z = surface``.
* ``assembly``: a peg (axes x, z) searching for and entering a hole of width
  ``peg_width + clearance`` cut into the surface at ``hole_x``.
* ``pivot``: a finger (axes x, z) pushing the foot of a bar that leans on a
  wall at ``x = 0``. Pushing the foot towards the wall raises the bar like a
  ladder; without enough push the foot creeps back out and the bar falls.

Contacts are penalty springs with one-sided dampers. Tangential friction is a
saturated Coulomb law, so ``|f_t| <= mu * f_n`` always holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigError, NumericError

TASKS = ("wall", "assembly", "pivot")
TASK_AXES = {"wall": ("z",), "assembly": ("x", "z"), "pivot": ("x", "z")}
UPRIGHT_TOLERANCE = math.radians(5.0)
INSERTION_FRACTION = 0.8


@dataclass(frozen=True)
class Geometry:
    """Scenario dimensions in meters (and kg for the pivoted object)."""

    surface: float = 0.0
    peg_width: float = 0.04
    clearance: float = 0.002
    hole_depth: float = 0.02
    hole_x: float = 0.0
    object_length: float = 0.10
    object_thickness: float = 0.026
    object_mass: float = 0.076
    face_margin: float = 0.005
    initial_angle: float = 0.2
    target_depth: float = 0.002


@dataclass(frozen=True)
class EnvConfig:
    task: str = "wall"
    k_env: float = 1000.0
    d_env: float = 5.0
    mu: float = 0.3
    geometry: Geometry = field(default_factory=Geometry)
    noise_sigma: float = 0.2
    force_clip: float = 10.0
    latency_steps: int = 0
    seed: int = 0
    friction_v_eps: float = 5e-3
    gravity: float = 9.81
    reward_scale: float = 1.0
    object_mobility: float = 0.1

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if min(self.k_env, self.d_env, self.mu, self.noise_sigma) < 0:
            raise ConfigError("k_env, d_env, mu and noise_sigma must be non-negative")
        if not self.force_clip > 0:
            raise ConfigError("force_clip must be positive")
        if self.latency_steps < 0:
            raise ConfigError("latency_steps must be non-negative")
        if not self.friction_v_eps > 0:
            raise ConfigError("friction_v_eps must be positive")
        if self.object_mobility < 0:
            raise ConfigError("object_mobility must be non-negative")

    @property
    def n_axes(self) -> int:
        return len(TASK_AXES[self.task])

    def perturbed(self, **changes) -> "EnvConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class EnvState:
    """Tool pose/velocity, pivot angle and contact bookkeeping."""

    pos: np.ndarray
    vel: np.ndarray
    angle: float = 0.0
    angle_rate: float = 0.0
    in_hole: bool = False
    contacts: tuple = ()

    @property
    def in_contact(self) -> bool:
        return bool(self.contacts)


def initial_state(cfg: EnvConfig, pose) -> EnvState:
    pos = np.atleast_1d(np.asarray(pose, dtype=float)).copy()
    if pos.size != cfg.n_axes:
        raise ConfigError(f"{cfg.task} expects a {cfg.n_axes}-D pose, got {pos.size}")
    angle = cfg.geometry.initial_angle if cfg.task == "pivot" else 0.0
    return EnvState(pos=pos, vel=np.zeros_like(pos), angle=angle)


def _normal_force(k, d, pen, pen_rate):
    return k * pen + d * max(0.0, pen_rate)


def _friction(mu, f_n, slip_speed, v_eps):
    """Saturated Coulomb friction opposing ``slip_speed``."""
    return -mu * f_n * float(np.clip(slip_speed / v_eps, -1.0, 1.0))


def _wall_step(state, cfg, pos, vel, dt):
    g = cfg.geometry
    pen = g.surface - pos[0]
    if pen <= 0:
        return replace(state, pos=pos, vel=vel, contacts=()), np.zeros(1)
    f_n = _normal_force(cfg.k_env, cfg.d_env, pen, -vel[0])
    return replace(state, pos=pos, vel=vel, contacts=("surface",)), np.array([f_n])


def _assembly_step(state, cfg, pos, vel, dt):
    g = cfg.geometry
    x, z = pos
    vx, vz = vel
    half = 0.5 * g.clearance
    offset = x - g.hole_x
    in_hole = state.in_hole
    if not in_hole and z < g.surface and abs(offset) <= half:
        in_hole = True
    elif in_hole and z >= g.surface:
        in_hole = False

    force = np.zeros(2)
    contacts = []
    if in_hole:
        lateral = abs(offset) - half
        if lateral > 0:
            side = math.copysign(1.0, offset)
            f_l = _normal_force(cfg.k_env, cfg.d_env, lateral, side * vx)
            force[0] -= side * f_l
            force[1] += _friction(cfg.mu, f_l, vz, cfg.friction_v_eps)
            contacts.append("hole_wall")
        bottom = g.surface - g.hole_depth
        pen = bottom - z
        if pen > 0:
            f_n = _normal_force(cfg.k_env, cfg.d_env, pen, -vz)
            force[1] += f_n
            force[0] += _friction(cfg.mu, f_n, vx, cfg.friction_v_eps)
            contacts.append("hole_bottom")
    else:
        pen = g.surface - z
        if pen > 0:
            f_n = _normal_force(cfg.k_env, cfg.d_env, pen, -vz)
            force[1] += f_n
            force[0] += _friction(cfg.mu, f_n, vx, cfg.friction_v_eps)
            contacts.append("surface")
    new = replace(state, pos=pos, vel=vel, in_hole=in_hole, contacts=tuple(contacts))
    return new, force


def _pivot_step(state, cfg, pos, vel, dt):
    g = cfg.geometry
    length = g.object_length
    rest_foot = length * math.cos(g.initial_angle)
    theta = state.angle
    foot = length * math.cos(theta)
    force = np.zeros(2)
    contacts = []

    pen = foot - pos[0]
    touching = pen > 0 and -g.face_margin <= pos[1] <= g.object_thickness + g.face_margin
    if touching:
        f_n = _normal_force(cfg.k_env, cfg.d_env, pen, -vel[0])
        force[0] += f_n
        force[1] += _friction(cfg.mu, f_n, vel[1], cfg.friction_v_eps)
        contacts.append("object")

    # Horizontal push at the foot needed to hold the leaning bar against gravity.
    hold = 0.5 * g.object_mass * cfg.gravity / math.tan(max(theta, 1e-3))
    rate = dt * cfg.object_mobility
    if touching:
        # Implicit in the contact spring so stiff environments stay stable.
        new_foot = (foot + rate * (cfg.k_env * pos[0] + hold)) / (1.0 + rate * cfg.k_env)
        if new_foot <= pos[0]:
            new_foot = foot + rate * hold
    else:
        new_foot = foot + rate * hold
    new_foot = min(max(new_foot, 0.0), rest_foot)
    theta_new = math.acos(new_foot / length)

    # Floor and wall keep the finger in the workspace.
    if pos[1] < 0:
        force[1] += _normal_force(cfg.k_env, cfg.d_env, -pos[1], -vel[1])
        contacts.append("floor")
    if pos[0] < 0:
        force[0] += _normal_force(cfg.k_env, cfg.d_env, -pos[0], -vel[0])
        contacts.append("wall")
    new = replace(state, pos=pos, vel=vel, angle=theta_new,
                  angle_rate=(theta_new - theta) / dt, contacts=tuple(contacts))
    return new, force


_STEPPERS = {"wall": _wall_step, "assembly": _assembly_step, "pivot": _pivot_step}


def env_step(state: EnvState, cfg: EnvConfig, x_c, v_c, dt: float):
    """Place the tool at the commanded compliant pose and return the contact force.

    Returns:
        ``(new_state, raw_force)`` where the force acts on the tool.
    """
    if not dt > 0:
        raise ConfigError("dt must be positive")
    pos = np.atleast_1d(np.asarray(x_c, dtype=float)).copy()
    vel = np.atleast_1d(np.asarray(v_c, dtype=float)).copy()
    if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))):
        raise NumericError("non-finite tool command")
    if pos.size != cfg.n_axes or vel.size != cfg.n_axes:
        raise ConfigError(f"{cfg.task} expects {cfg.n_axes} axes")
    return _STEPPERS[cfg.task](state, cfg, pos, vel, dt)


def sensor_read(raw_force, cfg: EnvConfig, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Add zero-mean Gaussian noise, then clip each component to ``+-force_clip``."""
    f = np.atleast_1d(np.asarray(raw_force, dtype=float))
    if cfg.noise_sigma > 0:
        if rng is None:
            raise ConfigError("a random generator is required when noise_sigma > 0")
        f = f + rng.normal(0.0, cfg.noise_sigma, size=f.shape)
    return np.clip(f, -cfg.force_clip, cfg.force_clip)


def assembly_reward(pos, goal, scale: float = 1.0) -> float:
    """``10 ** (1 - scale * ||pos - goal||_2)``."""
    pos = np.atleast_1d(np.asarray(pos, dtype=float))
    goal = np.atleast_1d(np.asarray(goal, dtype=float))
    if pos.shape != goal.shape:
        raise ConfigError("position and goal dimensions differ")
    return float(10.0 ** (1.0 - scale * np.linalg.norm(pos - goal)))


def planar_rotation(angle: float) -> np.ndarray:
    """Rotation by ``angle`` about the pivot (y) axis."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def rotation_distance(r, r_goal) -> float:
    cos_d = 0.5 * (np.trace(np.asarray(r_goal) @ np.asarray(r).T) - 1.0)
    return float(math.acos(min(1.0, max(-1.0, cos_d))))


def pivot_reward(r, r_goal) -> float:
    """``pi / 2`` minus the geodesic distance between two rotations."""
    return 0.5 * math.pi - rotation_distance(r, r_goal)


def randomize_initial_pose(task: str, rng: np.random.Generator) -> np.ndarray:
    """Uniform initial tool pose in meters.

    ``assembly`` returns ``(x, y, z)`` with z above the surface, ``pivot``
    returns ``(x, z)`` relative to the wall and ``wall`` returns ``(z,)``.
    """
    if task == "assembly":
        return np.array([rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03), rng.uniform(0.025, 0.035)])
    if task == "pivot":
        return np.array([rng.uniform(0.12, 0.18), rng.uniform(0.0, 0.01)])
    if task == "wall":
        return np.array([rng.uniform(0.025, 0.035)])
    raise ConfigError(f"unknown task {task!r}")


def planar_start(task: str, pose: np.ndarray) -> np.ndarray:
    """Reduce a randomized pose to the axes a task simulates."""
    if task == "assembly":
        return np.array([pose[0], pose[2]])
    return np.asarray(pose, dtype=float)


def task_goal(cfg: EnvConfig) -> np.ndarray:
    g = cfg.geometry
    if cfg.task == "assembly":
        return np.array([g.hole_x, g.surface - g.hole_depth])
    if cfg.task == "wall":
        return np.array([g.surface - g.target_depth])
    return np.array([0.0, g.object_length])


def task_reward(cfg: EnvConfig, state: EnvState) -> float:
    if cfg.task == "pivot":
        return pivot_reward(planar_rotation(state.angle), planar_rotation(0.5 * math.pi))
    return assembly_reward(state.pos, task_goal(cfg), cfg.reward_scale)


def success_check(task: str, state: EnvState, cfg: Optional[EnvConfig] = None) -> bool:
    """Whether a single state counts as task completion."""
    cfg = cfg or EnvConfig(task=task)
    g = cfg.geometry
    if task == "assembly":
        depth = g.surface - state.pos[1]
        lateral = abs(state.pos[0] - g.hole_x)
        return bool(state.in_hole and depth >= INSERTION_FRACTION * g.hole_depth
                    and lateral <= g.clearance)
    if task == "pivot":
        return bool(state.angle >= 0.5 * math.pi - UPRIGHT_TOLERANCE)
    if task == "wall":
        return bool(state.in_contact and abs(state.vel[0]) < 1e-2)
    raise ConfigError(f"unknown task {task!r}")


@dataclass
class EpisodeOutcome:
    success: bool
    completion_time: Optional[float]
    max_force: float
    separations: int


class EpisodeMonitor:
    """Accumulates completion time, peak force and contact-separation events."""

    def __init__(self, cfg: EnvConfig):
        self.cfg = cfg
        self.completion_time: Optional[float] = None
        self.max_force = 0.0
        self.separations = 0
        self._was_in_contact = False
        self._last: Optional[EnvState] = None

    def update(self, t: float, state: EnvState, raw_force) -> None:
        self.max_force = max(self.max_force, float(np.linalg.norm(raw_force)))
        contact = is_task_contact(self.cfg.task, state)
        if self._was_in_contact and not contact:
            self.separations += 1
        self._was_in_contact = contact
        if self.completion_time is None and success_check(self.cfg.task, state, self.cfg):
            self.completion_time = t
        self._last = state

    def outcome(self) -> EpisodeOutcome:
        success = self._last is not None and success_check(self.cfg.task, self._last, self.cfg)
        return EpisodeOutcome(
            success=bool(success),
            completion_time=float(self.completion_time) if success else None,
            max_force=self.max_force,
            separations=self.separations,
        )


def is_task_contact(task: str, state: EnvState) -> bool:
    """Contact with the manipulated surface; workspace limits do not count."""
    return any(c in ("surface", "object", "hole_wall", "hole_bottom") for c in state.contacts)
