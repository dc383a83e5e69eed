"""Force recording for record & replay, plus a local linear force-model baseline."""

from __future__ import annotations

import csv
import threading
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    DegenerateFitError,
    DomainError,
    NumericError,
    OrderingError,
    ShapeError,
    UnderdeterminedError,
)

RIDGE_LAMBDA = 1e-8


@dataclass(frozen=True)
class ForceSnapshot:
    """Immutable copy of a window, handed to the optimizer."""

    t: np.ndarray
    f: np.ndarray  # (N, n)
    dt: float

    def __post_init__(self):
        self.t.setflags(write=False)
        self.f.setflags(write=False)

    def __len__(self) -> int:
        return self.t.size

    def replay(self, k: int) -> np.ndarray:
        return replay(self, k)


class ForceWindow:
    """Bounded buffer of timestamped force samples.

    Recording and snapshotting are guarded by a lock so a control thread can
    keep recording while an optimizer works on a snapshot.
    """

    def __init__(self, capacity: int, dt: float, n_axes: Optional[int] = None):
        if capacity < 1:
            raise DomainError("capacity must be at least 1")
        if not dt > 0:
            raise DomainError("dt must be positive")
        self.capacity = int(capacity)
        self.dt = float(dt)
        self.n_axes = n_axes
        self._t: deque = deque(maxlen=self.capacity)
        self._f: deque = deque(maxlen=self.capacity)
        self._lock = threading.Lock()

    @classmethod
    def for_period(cls, period: float, dt: float, n_axes: Optional[int] = None) -> "ForceWindow":
        """Window holding exactly one adaptation period of samples."""
        return cls(max(1, int(round(period / dt))), dt, n_axes)

    def __len__(self) -> int:
        return len(self._t)

    @property
    def last_time(self) -> Optional[float]:
        return self._t[-1] if self._t else None

    def record(self, t: float, f) -> "ForceWindow":
        f = np.atleast_1d(np.asarray(f, dtype=float)).copy()
        if not np.all(np.isfinite(f)) or not np.isfinite(t):
            raise NumericError("force samples must be finite")
        with self._lock:
            if self.n_axes is None:
                self.n_axes = f.size
            elif f.size != self.n_axes:
                raise ShapeError(f"expected {self.n_axes} force axes, got {f.size}")
            if self._t and not t > self._t[-1]:
                raise OrderingError(f"timestamp {t} does not follow {self._t[-1]}")
            self._t.append(float(t))
            self._f.append(f)
        return self

    def clear(self) -> None:
        with self._lock:
            self._t.clear()
            self._f.clear()

    def snapshot(self) -> ForceSnapshot:
        with self._lock:
            n = self.n_axes or 0
            t = np.array(self._t, dtype=float)
            f = np.array(self._f, dtype=float).reshape(len(self._t), n)
        return ForceSnapshot(t=t, f=f, dt=self.dt)

    def replay(self, k: int) -> np.ndarray:
        return replay(self, k)

    def to_csv(self, path) -> Path:
        return write_force_csv(self.snapshot(), path)


def record(window: ForceWindow, t: float, f) -> ForceWindow:
    return window.record(t, f)


def replay(window, k: int) -> np.ndarray:
    """Return recorded force ``k``; indices past the end hold the last sample."""
    if len(window) == 0:
        raise DomainError("cannot replay an empty window")
    if k < 0:
        raise DomainError("replay index must be non-negative")
    if isinstance(window, ForceWindow):
        window = window.snapshot()
    return window.f[min(k, len(window) - 1)].copy()


def replay_sequence(window, steps: int) -> np.ndarray:
    """Forces for ``steps`` consecutive replay indices, shape ``(steps, n)``."""
    snap = window.snapshot() if isinstance(window, ForceWindow) else window
    if len(snap) == 0:
        raise DomainError("cannot replay an empty window")
    idx = np.minimum(np.arange(steps), len(snap) - 1)
    return snap.f[idx]


def write_force_csv(snap: ForceSnapshot, path) -> Path:
    path = Path(path)
    n = snap.f.shape[1] if snap.f.ndim == 2 else 0
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"f_axis{i}" for i in range(n)])
        for t, row in zip(snap.t, snap.f):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])
    return path


@dataclass(frozen=True)
class LinearForceModel:
    """Per-axis ``f = a x + b x_dot + c`` with the fit's residual sum of squares."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    residual: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("a", "b", "c"):
            v = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if not np.all(np.isfinite(v)):
                raise NumericError(f"model coefficient {name} is not finite")
            object.__setattr__(self, name, v)


def _solve_axis(x, xdot, f):
    design = np.column_stack([x, xdot, np.ones_like(x)])
    # Column scaling keeps the normal equations well conditioned at mm scales.
    scale = np.linalg.norm(design, axis=0)
    scale[scale == 0] = 1.0
    ds = design / scale
    gram = ds.T @ ds
    rhs = ds.T @ f
    rank = np.linalg.matrix_rank(ds)
    if rank < 3:
        beta = np.linalg.solve(gram + RIDGE_LAMBDA * np.eye(3), rhs) / scale
        return beta, False
    beta = np.linalg.solve(gram, rhs) / scale
    return beta, True


def fit_linear_force(window, x, x_dot) -> LinearForceModel:
    """Ordinary least squares of recorded force against pose and velocity, per axis.

    ``x`` and ``x_dot`` are ``(N,)`` or ``(N, n)`` samples aligned with the
    window's force samples.

    Raises:
        UnderdeterminedError: fewer than 3 samples.
        DegenerateFitError: rank-deficient regressors on some axis; the ridge
            solution is attached as ``fallback``.
    """
    snap = window.snapshot() if isinstance(window, ForceWindow) else window
    f = np.asarray(snap.f if hasattr(snap, "f") else snap, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    x = np.asarray(x, dtype=float)
    x_dot = np.asarray(x_dot, dtype=float)
    if x.ndim == 1:
        x, x_dot = x[:, None], x_dot[:, None]
    if x.shape != f.shape or x_dot.shape != f.shape:
        raise ShapeError("state samples must match the force samples")
    if f.shape[0] < 3:
        raise UnderdeterminedError(f"need at least 3 samples, got {f.shape[0]}")
    coeffs = np.zeros((f.shape[1], 3))
    residual = np.zeros(f.shape[1])
    full_rank = True
    for i in range(f.shape[1]):
        beta, ok = _solve_axis(x[:, i], x_dot[:, i], f[:, i])
        full_rank &= ok
        coeffs[i] = beta
        pred = beta[0] * x[:, i] + beta[1] * x_dot[:, i] + beta[2]
        residual[i] = float(np.sum((f[:, i] - pred) ** 2))
    model = LinearForceModel(coeffs[:, 0], coeffs[:, 1], coeffs[:, 2], residual)
    if not full_rank:
        raise DegenerateFitError("rank-deficient regressors; ridge fallback attached", fallback=model)
    return model


def fit_linear_force_or_fallback(window, x, x_dot) -> tuple[LinearForceModel, bool]:
    """Like :func:`fit_linear_force` but returns ``(model, degenerate)``."""
    try:
        return fit_linear_force(window, x, x_dot), False
    except DegenerateFitError as exc:
        return exc.fallback, True


def predict_linear_force(model: LinearForceModel, x, x_dot) -> np.ndarray:
    return model.a * np.asarray(x, dtype=float) + model.b * np.asarray(x_dot, dtype=float) + model.c
