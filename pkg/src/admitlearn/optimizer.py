"""Residual admittance optimization against replayed force windows.

The decision variable is a residual ``delta_u`` on the current parameter
vector. The search runs on ``z = log(u_init + delta_u)`` so positivity holds by
construction; the feasible set is a box in ``z`` made of the ``eps`` floor and
a per-update trust ratio around ``u_init``. Every candidate is projected onto
the box before it is evaluated.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .admittance import ErrorState, ParamVector
from .cost import CostWeights, batch_cost
from .errors import ConfigError, ConstraintError, DomainError
from .forces import ForceSnapshot, ForceWindow, LinearForceModel, replay_sequence

log = logging.getLogger(__name__)

DEFAULT_EPS = 1e-3
DEFAULT_BUDGET = 200
DEFAULT_TRUST_RATIO = 4.0


@dataclass(frozen=True)
class OptProblem:
    """One residual optimization around ``u_init`` on a replayed window.

    Attributes:
        u_init: parameters the residual is added to.
        x0: error state at the first sample of the window.
        window: immutable force snapshot replayed during rollouts.
        dt: integration step, must match the window sampling.
        weights: objective weights.
        eps: floor on every entry of ``u_init + delta_u``.
        budget: maximum number of rollout evaluations.
        trust_ratio: each entry may move within ``[u / r, u * r]`` per solve.
        horizon: rollout steps; defaults to the window length.
        force_model: optional fitted force law used instead of replay; then
            ``desired_pos``/``desired_vel`` give the desired trajectory over
            the horizon so forces can follow the simulated pose.
    """

    u_init: ParamVector
    x0: ErrorState
    window: ForceSnapshot
    dt: float = 0.01
    weights: CostWeights = field(default_factory=CostWeights)
    eps: float = DEFAULT_EPS
    budget: int = DEFAULT_BUDGET
    trust_ratio: float = DEFAULT_TRUST_RATIO
    horizon: Optional[int] = None
    force_model: Optional[LinearForceModel] = None
    desired_pos: Optional[np.ndarray] = None
    desired_vel: Optional[np.ndarray] = None

    def __post_init__(self):
        if isinstance(self.window, ForceWindow):
            object.__setattr__(self, "window", self.window.snapshot())
        if not self.eps > 0:
            raise ConfigError("eps must be positive")
        if self.budget < 1:
            raise ConfigError("budget must be at least 1")
        if not self.trust_ratio >= 1:
            raise ConfigError("trust_ratio must be >= 1")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if np.any(self.u_init.as_array() <= self.eps):
            raise ConfigError("u_init must exceed the eps floor elementwise")
        if len(self.window) == 0:
            raise DomainError("force window is empty")
        if self.window.f.shape[1] != self.u_init.n or self.x0.e.size != self.u_init.n:
            raise ConfigError("window, state and parameter axis counts disagree")
        if self.force_model is not None:
            if self.desired_pos is None or self.desired_vel is None:
                raise ConfigError("a force model needs the desired trajectory over the horizon")
            if len(self.desired_pos) < self.steps or len(self.desired_vel) < self.steps:
                raise ConfigError("desired trajectory is shorter than the horizon")

    @property
    def steps(self) -> int:
        return self.horizon if self.horizon is not None else len(self.window)

    def forces(self) -> np.ndarray:
        return replay_sequence(self.window, self.steps)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Feasible box for ``u`` (not log space)."""
        u = self.u_init.as_array()
        lo = np.maximum(u / self.trust_ratio, self.eps)
        hi = u * self.trust_ratio
        return lo, hi


@dataclass
class OptResult:
    delta_u: np.ndarray
    cost_before: float
    cost_after: float
    evaluations: int
    converged: bool
    iterations: int = 0

    def u(self, u_init: ParamVector) -> ParamVector:
        return ParamVector.from_array(u_init.as_array() + self.delta_u)


def simulate_batch(u: np.ndarray, x0: ErrorState, forces: np.ndarray, dt: float):
    """Roll out many parameter vectors at once.

    Args:
        u: ``(B, 3n)`` parameter vectors.
        x0: shared initial error state.
        forces: ``(N, n)`` forcing, one row per step.

    Returns:
        ``(e, e_dot)`` arrays of shape ``(B, N + 1, n)``; row 0 is ``x0``.
    """
    u = np.atleast_2d(u)
    n = x0.e.size
    inv_m, k_norm, d_norm = u[:, :n], u[:, n:2 * n], u[:, 2 * n:]
    n_steps = forces.shape[0]
    e_hist = np.empty((u.shape[0], n_steps + 1, n))
    v_hist = np.empty_like(e_hist)
    e = np.broadcast_to(x0.e, (u.shape[0], n)).copy()
    v = np.broadcast_to(x0.e_dot, (u.shape[0], n)).copy()
    e_hist[:, 0] = e
    v_hist[:, 0] = v
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_steps):
            acc = -d_norm * v - k_norm * e + inv_m * forces[k]
            v = v + dt * acc
            e = e + dt * v
            e_hist[:, k + 1] = e
            v_hist[:, k + 1] = v
    return e_hist, v_hist


def simulate_batch_model(u: np.ndarray, x0: ErrorState, model: LinearForceModel,
                         desired_pos: np.ndarray, desired_vel: np.ndarray, steps: int, dt: float):
    """Like :func:`simulate_batch` but forces come from ``f = a x + b x_dot + c``
    evaluated on the simulated compliant pose ``x_d + e``."""
    u = np.atleast_2d(u)
    n = x0.e.size
    inv_m, k_norm, d_norm = u[:, :n], u[:, n:2 * n], u[:, 2 * n:]
    xd = np.asarray(desired_pos, dtype=float).reshape(-1, n)
    vd = np.asarray(desired_vel, dtype=float).reshape(-1, n)
    e_hist = np.empty((u.shape[0], steps + 1, n))
    v_hist = np.empty_like(e_hist)
    e = np.broadcast_to(x0.e, (u.shape[0], n)).copy()
    v = np.broadcast_to(x0.e_dot, (u.shape[0], n)).copy()
    e_hist[:, 0] = e
    v_hist[:, 0] = v
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            f = model.a * (xd[k] + e) + model.b * (vd[k] + v) + model.c
            acc = -d_norm * v - k_norm * e + inv_m * f
            v = v + dt * acc
            e = e + dt * v
            e_hist[:, k + 1] = e
            v_hist[:, k + 1] = v
    return e_hist, v_hist


def _batch_costs(problem: OptProblem, u: np.ndarray, forces=None) -> np.ndarray:
    if problem.force_model is not None:
        e, v = simulate_batch_model(u, problem.x0, problem.force_model, problem.desired_pos,
                                    problem.desired_vel, problem.steps, problem.dt)
    else:
        forces = problem.forces() if forces is None else forces
        e, v = simulate_batch(u, problem.x0, forces, problem.dt)
    with np.errstate(over="ignore", invalid="ignore"):
        c = batch_cost(e, v, problem.dt, problem.weights.w, problem.weights.axis_scale)
    return np.where(np.isfinite(c), c, np.inf)


def rollout_cost(problem: OptProblem, delta_u) -> float:
    """Objective of ``u_init + delta_u`` on the replayed window.

    Raises:
        ConstraintError: the candidate violates the ``eps`` floor. Candidates are
            never clipped here.
    """
    u = problem.u_init.as_array() + np.asarray(delta_u, dtype=float)
    if u.shape != problem.u_init.as_array().shape:
        raise ConstraintError("delta_u has the wrong length")
    if np.any(u < problem.eps) or not np.all(np.isfinite(u)):
        raise ConstraintError("u_init + delta_u violates the positivity floor")
    return float(_batch_costs(problem, u[None, :])[0])


class _Objective:
    """Log-space objective with evaluation accounting and best-point tracking."""

    def __init__(self, problem: OptProblem):
        self.problem = problem
        self.forces = problem.forces()
        lo, hi = problem.bounds()
        self.lo = np.log(lo)
        self.hi = np.log(hi)
        self.evaluations = 0
        self.best_z: Optional[np.ndarray] = None
        self.best_f = np.inf
        self.scale = 1.0

    def project(self, z):
        return np.clip(z, self.lo, self.hi)

    def remaining(self) -> int:
        return self.problem.budget - self.evaluations

    def __call__(self, z_batch: np.ndarray) -> np.ndarray:
        z_batch = np.atleast_2d(z_batch)
        if np.any(z_batch < self.lo - 1e-12) or np.any(z_batch > self.hi + 1e-12):
            raise ConstraintError("candidate outside the feasible box")
        u = np.exp(z_batch)
        if np.any(u < self.problem.eps * (1 - 1e-9)):
            raise ConstraintError("candidate below the eps floor")
        costs = _batch_costs(self.problem, u, self.forces) / self.scale
        self.evaluations += z_batch.shape[0]
        i = int(np.argmin(costs))
        if costs[i] < self.best_f:
            self.best_f = float(costs[i])
            self.best_z = z_batch[i].copy()
        return costs

    def gradient(self, z, h=1e-4):
        """Central differences in log space; one-sided at active bounds."""
        dim = z.size
        plus = np.tile(z, (dim, 1))
        minus = np.tile(z, (dim, 1))
        idx = np.arange(dim)
        plus[idx, idx] = np.minimum(z + h, self.hi)
        minus[idx, idx] = np.maximum(z - h, self.lo)
        vals = self(np.vstack([plus, minus]))
        span = plus[idx, idx] - minus[idx, idx]
        span[span == 0] = np.inf
        return (vals[:dim] - vals[dim:]) / span


def _probe_bounds(obj: _Objective, z: np.ndarray, f: float) -> tuple[np.ndarray, float]:
    """Evaluate each coordinate at both bounds, then the corner of the best choices.

    Costs ``2 dim + 1`` evaluations and returns the best of those points and
    ``z``. Skipped when the budget could not also pay for a descent step.
    """
    dim = z.size
    if obj.remaining() < 2 * dim + 1 + 2 * dim + 1:
        return z, f
    idx = np.arange(dim)
    low = np.tile(z, (dim, 1))
    high = np.tile(z, (dim, 1))
    low[idx, idx] = obj.lo
    high[idx, idx] = obj.hi
    vals = obj(np.vstack([low, high]))
    f_lo, f_hi = vals[:dim], vals[dim:]
    corner = z.copy()
    pick_lo = (f_lo < f) & (f_lo <= f_hi)
    pick_hi = (f_hi < f) & (f_hi < f_lo)
    corner[pick_lo] = obj.lo[pick_lo]
    corner[pick_hi] = obj.hi[pick_hi]
    obj(corner[None, :])
    if obj.best_f < f:
        return obj.best_z.copy(), obj.best_f
    return z, f


def log_space_gradient(problem: OptProblem, h: float = 1e-4) -> np.ndarray:
    """Gradient of the cost with respect to ``u`` at ``delta_u = 0``.

    Computed the way the optimizer does it (log-space central differences),
    then mapped back through ``du = u dz``.
    """
    obj = _Objective(problem)
    z0 = np.log(problem.u_init.as_array())
    return obj.gradient(z0, h) / np.exp(z0)


def optimize_residual(
    problem: OptProblem,
    gtol: float = 1e-6,
    ftol: float = 1e-9,
    max_iter: int = 100,
    probe: bool = True,
) -> OptResult:
    """Projected BFGS on log-parameters with Armijo backtracking.

    The start point ``delta_u = 0`` is always evaluated first, so the returned
    cost never exceeds the starting cost. With ``probe`` the descent starts
    from the best of a few box points (see ``_probe_bounds``), which helps
    when the cost has a separate basin at a trust-box corner.
    """
    obj = _Objective(problem)
    u0 = problem.u_init.as_array()
    z = obj.project(np.log(u0))
    f0_raw = float(obj(z[None, :])[0])
    cost_before = f0_raw
    if not np.isfinite(f0_raw):
        log.warning("starting parameters give a divergent rollout")
    obj.scale = f0_raw if np.isfinite(f0_raw) and f0_raw > 0 else 1.0
    obj.best_f = f0_raw / obj.scale
    f = obj.best_f
    if probe and np.isfinite(f):
        z, f = _probe_bounds(obj, z, f)

    dim = z.size
    hess_inv = np.eye(dim)
    converged = f == 0.0
    iterations = 0
    g = None
    while not converged and iterations < max_iter:
        if obj.remaining() < 2 * dim + 1:
            break
        if g is None:
            g = obj.gradient(z)
        if not np.all(np.isfinite(g)):
            break
        at_lo = (z <= obj.lo + 1e-12) & (g > 0)
        at_hi = (z >= obj.hi - 1e-12) & (g < 0)
        free = ~(at_lo | at_hi)
        pg = np.where(free, g, 0.0)
        if np.linalg.norm(pg, np.inf) < gtol:
            converged = True
            break
        h_free = hess_inv[np.ix_(free, free)]
        step = np.zeros(dim)
        step[free] = -h_free @ g[free]
        if g @ step >= 0:
            hess_inv = np.eye(dim)
            step = -pg
        # Cap the first move to a unit change in log space.
        norm = np.linalg.norm(step, np.inf)
        if norm > 1.0:
            step /= norm

        alpha = 1.0
        accepted = False
        while obj.remaining() >= 1:
            z_new = obj.project(z + alpha * step)
            if np.allclose(z_new, z):
                break
            f_new = float(obj(z_new[None, :])[0])
            if f_new <= f + 1e-4 * g @ (z_new - z):
                accepted = True
                break
            alpha *= 0.3
            if alpha < 1e-6:
                break
        iterations += 1
        if not accepted:
            if not np.allclose(hess_inv, np.eye(dim)):
                hess_inv = np.eye(dim)
                continue
            converged = True
            break
        if obj.remaining() < 2 * dim:
            z, f = z_new, f_new
            break
        g_new = obj.gradient(z_new)
        s = z_new - z
        y = g_new - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            eye = np.eye(dim)
            hess_inv = (eye - rho * np.outer(s, y)) @ hess_inv @ (eye - rho * np.outer(y, s)) \
                + rho * np.outer(s, s)
        improvement = f - f_new
        z, f, g = z_new, f_new, g_new
        if improvement <= ftol * max(abs(f), 1e-300):
            converged = True

    best_z = obj.best_z if obj.best_z is not None else z
    best_u = np.maximum(np.exp(best_z), problem.eps)
    cost_after = obj.best_f * obj.scale
    if not cost_after < cost_before:
        # No strict improvement: report the start point exactly.
        best_u, cost_after = u0, cost_before
    return OptResult(
        delta_u=best_u - u0,
        cost_before=cost_before,
        cost_after=float(cost_after),
        evaluations=obj.evaluations,
        converged=bool(converged),
        iterations=iterations,
    )

