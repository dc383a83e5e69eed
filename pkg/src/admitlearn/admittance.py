"""Diagonal admittance dynamics and the gain <-> parameter-vector bijection.

The controller integrates the error ``e = x_c - x_d`` between the compliant and
desired trajectories,

    M (e_ddot) + D (e_dot) + K e = F_ext,

written in normalized form ``e_ddot = -D' e_dot - K' e + M^-1 F_ext`` with
``K' = M^-1 K`` and ``D' = M^-1 D``. All matrices are diagonal, so everything
here works per axis on 1-D arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import NamedTuple, Optional

import numpy as np

from .errors import DomainError, NumericError, ShapeError, StabilityConstraintError

DEFAULT_DT = 0.01

# Translational axes first, then rotational, as in a 6-D wrench.
SIX_AXIS_INERTIA = (1.0, 1.0, 1.0, 0.1, 0.1, 0.1)


def _vec(x, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be a scalar or 1-D array, got shape {arr.shape}")
    return arr


def _fields_equal(a, b) -> bool:
    if type(a) is not type(b):
        return NotImplemented
    return all(np.array_equal(getattr(a, f.name), getattr(b, f.name)) for f in fields(a))


def _check_finite(name: str, *arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError(f"non-finite values in {name}")


@dataclass(frozen=True, eq=False)
class AdmittanceParams:
    """Per-axis inertia ``m``, stiffness ``k`` and damping ``d``."""

    m: np.ndarray
    k: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        m, k, d = (_vec(v, name) for v, name in ((self.m, "m"), (self.k, "k"), (self.d, "d")))
        if not (m.shape == k.shape == d.shape):
            raise ShapeError(f"m, k, d lengths differ: {m.shape}, {k.shape}, {d.shape}")
        _check_finite("admittance params", m, k, d)
        if np.any(m <= 0) or np.any(k <= 0) or np.any(d <= 0):
            raise StabilityConstraintError("admittance parameters must be strictly positive")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "d", d)

    @property
    def n(self) -> int:
        return self.m.size

    @classmethod
    def critically_damped(cls, k, m=1.0) -> "AdmittanceParams":
        """Params with ``d = 2 sqrt(m k)``; ``m`` broadcasts against ``k``."""
        k = _vec(k, "k")
        m = np.broadcast_to(_vec(m, "m"), k.shape).copy()
        return cls(m=m, k=k, d=critical_damping(m, k))

    @classmethod
    def six_axis(cls, k) -> "AdmittanceParams":
        """Fixed inertia diag(1, 1, 1, 0.1, 0.1, 0.1) with critical damping."""
        k = _vec(k, "k")
        if k.size != 6:
            raise ShapeError("six_axis expects 6 stiffness values")
        return cls.critically_damped(k, m=np.array(SIX_AXIS_INERTIA))

    def damping_ratio(self) -> np.ndarray:
        return self.d / critical_damping(self.m, self.k)

    def as_dict(self) -> dict:
        return {"m": self.m.tolist(), "k": self.k.tolist(), "d": self.d.tolist()}

    __eq__ = _fields_equal


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Optimization variable: inverse inertia, ``M^-1 K`` and ``M^-1 D`` per axis."""

    inv_m: np.ndarray
    k_norm: np.ndarray
    d_norm: np.ndarray

    def __post_init__(self):
        parts = [_vec(v, name) for v, name in
                 ((self.inv_m, "inv_m"), (self.k_norm, "k_norm"), (self.d_norm, "d_norm"))]
        if not (parts[0].shape == parts[1].shape == parts[2].shape):
            raise ShapeError("inv_m, k_norm, d_norm lengths differ")
        _check_finite("parameter vector", *parts)
        for name, v in zip(("inv_m", "k_norm", "d_norm"), parts):
            object.__setattr__(self, name, v)

    @property
    def n(self) -> int:
        return self.inv_m.size

    def as_array(self) -> np.ndarray:
        """Flat layout ``[inv_m..., k_norm..., d_norm...]`` of length 3n."""
        return np.concatenate([self.inv_m, self.k_norm, self.d_norm])

    @classmethod
    def from_array(cls, u) -> "ParamVector":
        u = _vec(u, "u")
        if u.size % 3:
            raise ShapeError(f"parameter vector length {u.size} is not a multiple of 3")
        n = u.size // 3
        return cls(inv_m=u[:n].copy(), k_norm=u[n:2 * n].copy(), d_norm=u[2 * n:].copy())

    def is_positive(self) -> bool:
        return bool(np.all(self.as_array() > 0))

    __eq__ = _fields_equal


@dataclass(frozen=True, eq=False)
class ErrorState:
    """Position error ``e = x_c - x_d`` and its rate, per axis."""

    e: np.ndarray
    e_dot: np.ndarray

    def __post_init__(self):
        e, e_dot = _vec(self.e, "e"), _vec(self.e_dot, "e_dot")
        if e.shape != e_dot.shape:
            raise ShapeError("e and e_dot lengths differ")
        _check_finite("error state", e, e_dot)
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "e_dot", e_dot)

    @classmethod
    def zeros(cls, n: int) -> "ErrorState":
        return cls(np.zeros(n), np.zeros(n))

    __eq__ = _fields_equal


def critical_damping(m, k):
    """Return ``2 sqrt(m k)``, elementwise for arrays.

    >>> float(critical_damping(1.0, 100.0))
    20.0
    """
    m_arr = np.asarray(m, dtype=float)
    k_arr = np.asarray(k, dtype=float)
    if np.any(m_arr < 0) or np.any(k_arr < 0):
        raise DomainError("critical_damping requires m >= 0 and k >= 0")
    out = 2.0 * np.sqrt(m_arr * k_arr)
    return float(out) if out.ndim == 0 else out


def to_param_vector(p: AdmittanceParams) -> ParamVector:
    inv_m = 1.0 / p.m
    return ParamVector(inv_m=inv_m, k_norm=p.k * inv_m, d_norm=p.d * inv_m)


def recover_gains(u: ParamVector) -> AdmittanceParams:
    """Map an optimization vector back to ``M, K = M K', D = M D'``."""
    if not u.is_positive():
        raise StabilityConstraintError("parameter vector has non-positive entries")
    m = 1.0 / u.inv_m
    return AdmittanceParams(m=m, k=m * u.k_norm, d=m * u.d_norm)


def error_accel(e, e_dot, f, inv_m, k_norm, d_norm):
    """Right-hand side ``-D' e_dot - K' e + M^-1 f``; broadcasts over leading axes."""
    return -d_norm * e_dot - k_norm * e + inv_m * f


def step_error_dynamics(x: ErrorState, f_ext, u: ParamVector, dt: float) -> ErrorState:
    """Advance the error state one semi-implicit Euler step.

    Velocity is updated first from the acceleration at the current state, then
    the position uses the new velocity.
    """
    if not dt > 0:
        raise DomainError("dt must be positive")
    f = _vec(f_ext, "f_ext")
    if f.shape != x.e.shape or u.n != x.e.size:
        raise ShapeError("state, force and parameter dimensions disagree")
    _check_finite("force", f)
    acc = error_accel(x.e, x.e_dot, f, u.inv_m, u.k_norm, u.d_norm)
    e_dot = x.e_dot + dt * acc
    e = x.e + dt * e_dot
    return ErrorState(e, e_dot)


class CompliantTrajectory(NamedTuple):
    pos: np.ndarray
    vel: np.ndarray
    acc: np.ndarray
    e: np.ndarray
    e_dot: np.ndarray


def _as_samples(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ShapeError(f"{name} must have shape (N,) or (N, n)")
    return arr


def compliant_rollout(
    x_d,
    f_ext,
    p: AdmittanceParams,
    dt: float = DEFAULT_DT,
    xd_dot: Optional[np.ndarray] = None,
    xd_ddot: Optional[np.ndarray] = None,
) -> CompliantTrajectory:
    """Integrate the admittance law along a sampled desired trajectory.

    Sample ``k`` of the output is the state before force ``f_ext[k]`` acts; the
    acceleration at ``k`` uses that force. The compliant trajectory starts on
    the desired one (zero error). Desired velocity and acceleration default to
    finite differences of ``x_d``.

    Returns:
        CompliantTrajectory with arrays of shape (N, n).
    """
    if not dt > 0:
        raise DomainError("dt must be positive")
    xd = _as_samples(x_d, "x_d")
    f = _as_samples(f_ext, "f_ext")
    if xd.shape != f.shape:
        raise ShapeError(f"x_d shape {xd.shape} and f_ext shape {f.shape} differ")
    if xd.shape[1] != p.n:
        raise ShapeError(f"trajectory has {xd.shape[1]} axes, params have {p.n}")
    _check_finite("rollout inputs", xd, f)
    n_samples = xd.shape[0]
    if xd_dot is None:
        xd_dot = np.gradient(xd, dt, axis=0) if n_samples > 1 else np.zeros_like(xd)
    if xd_ddot is None:
        xd_ddot = np.gradient(xd_dot, dt, axis=0) if n_samples > 1 else np.zeros_like(xd)
    xd_dot = _as_samples(xd_dot, "xd_dot")
    xd_ddot = _as_samples(xd_ddot, "xd_ddot")

    u = to_param_vector(p)
    e = np.zeros_like(xd)
    e_dot = np.zeros_like(xd)
    e_ddot = np.zeros_like(xd)
    for i in range(n_samples):
        e_ddot[i] = error_accel(e[i], e_dot[i], f[i], u.inv_m, u.k_norm, u.d_norm)
        if i + 1 < n_samples:
            e_dot[i + 1] = e_dot[i] + dt * e_ddot[i]
            e[i + 1] = e[i] + dt * e_dot[i + 1]
    return CompliantTrajectory(xd + e, xd_dot + e_dot, xd_ddot + e_ddot, e, e_dot)


def energy(x: ErrorState, p: AdmittanceParams) -> float:
    """Virtual mass-spring energy ``1/2 sum m e_dot^2 + 1/2 sum k e^2``."""
    return float(0.5 * np.sum(p.m * x.e_dot ** 2) + 0.5 * np.sum(p.k * x.e ** 2))


def stable_dt_bound(p: AdmittanceParams) -> float:
    """Conservative step bound ``0.1 min sqrt(m / k)``."""
    return float(0.1 * np.min(np.sqrt(p.m / p.k)))
