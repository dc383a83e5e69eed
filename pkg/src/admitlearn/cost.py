"""Time-weighted smoothness / completion objective.

The continuous objective is ``int_0^T t [w |e| + (1 - w) |e_dot|] dt``. It is
discretized as a left Riemann sum with ``t_k = k dt``, so the first sample
never contributes. Multi-axis magnitudes are summed per axis (l1).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .admittance import ErrorState
from .errors import DomainError, ShapeError

States = Union[Sequence[ErrorState], tuple]


@dataclass(frozen=True)
class CostWeights:
    w: float = 0.4
    horizon_T: float = 1.0
    axis_scale: Optional[tuple] = None

    def __post_init__(self):
        if not 0.0 <= self.w <= 1.0:
            raise DomainError(f"weight w must lie in [0, 1], got {self.w}")
        if not self.horizon_T > 0:
            raise DomainError("horizon_T must be positive")


def _stack(states) -> tuple[np.ndarray, np.ndarray]:
    """Accept a sequence of ErrorState or an ``(e, e_dot)`` pair of arrays."""
    if isinstance(states, tuple) and len(states) == 2 and not isinstance(states[0], ErrorState):
        e = np.asarray(states[0], dtype=float)
        e_dot = np.asarray(states[1], dtype=float)
    else:
        states = list(states)
        if not states:
            raise DomainError("cost of an empty trajectory is undefined")
        e = np.stack([s.e for s in states])
        e_dot = np.stack([s.e_dot for s in states])
    if e.ndim == 1:
        e, e_dot = e[:, None], e_dot[:, None]
    if e.shape != e_dot.shape:
        raise ShapeError("e and e_dot sample arrays differ in shape")
    if e.shape[0] == 0:
        raise DomainError("cost of an empty trajectory is undefined")
    return e, e_dot


def _time_weighted_sums(e, e_dot, dt, axis_scale):
    # Works on (N, n) or batched (..., N, n) arrays.
    n_samples = e.shape[-2]
    t = np.arange(n_samples) * dt
    abs_e = np.abs(e)
    abs_v = np.abs(e_dot)
    if axis_scale is not None:
        scale = np.asarray(axis_scale, dtype=float)
        abs_e = abs_e * scale
        abs_v = abs_v * scale
    pos = np.einsum("...ka,k->...", abs_e, t) * dt
    vel = np.einsum("...ka,k->...", abs_v, t) * dt
    return pos, vel


def trajectory_cost(states, dt: float, weights: CostWeights) -> float:
    """Discretized ``w * ITAE + (1 - w) * FITAVE`` of an error trajectory."""
    if not dt > 0:
        raise DomainError("dt must be positive")
    e, e_dot = _stack(states)
    pos, vel = _time_weighted_sums(e, e_dot, dt, weights.axis_scale)
    return float(weights.w * pos + (1.0 - weights.w) * vel)


def itae(states, dt: float, axis_scale=None) -> float:
    """Time-weighted absolute position error."""
    return trajectory_cost(states, dt, CostWeights(w=1.0, axis_scale=axis_scale))


def fitave(states, dt: float, axis_scale=None) -> float:
    """Time-weighted absolute velocity error over the finite window."""
    return trajectory_cost(states, dt, CostWeights(w=0.0, axis_scale=axis_scale))


def batch_cost(e: np.ndarray, e_dot: np.ndarray, dt: float, w: float, axis_scale=None) -> np.ndarray:
    """Vectorized cost for arrays shaped ``(B, N, n)``; returns shape ``(B,)``."""
    pos, vel = _time_weighted_sums(e, e_dot, dt, axis_scale)
    return w * pos + (1.0 - w) * vel
