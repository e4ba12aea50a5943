"""The true LTV plant  x' = A(t) x + k C(t)^T x + b u(t),  y = C(t)^T x."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import NonFiniteError, OdeSystem, ShapeError, rk4_step
from .timefunc import TimeExpr, parse_expr

__all__ = [
    "DIVERGENCE_LIMIT",
    "DivergenceError",
    "PlantSpec",
    "TrajectoryLog",
    "measure",
    "plant_rhs",
    "simulate_plant",
]

DIVERGENCE_LIMIT = 1e9


class DivergenceError(RuntimeError):
    """A run blew up; ``signal`` names the offending quantity."""

    def __init__(self, t: float, signal: str, reason: str):
        self.t = t
        self.signal = signal
        self.reason = reason
        super().__init__(f"{signal} {reason} at t={t:.6g}")


def _expr(value) -> TimeExpr:
    if isinstance(value, TimeExpr):
        return value
    if isinstance(value, str):
        return parse_expr(value)
    return TimeExpr.constant(float(value))


@dataclass(frozen=True, eq=False)
class PlantSpec:
    """Plant data. Matrix entries may be given as TimeExpr, text or numbers."""

    A: tuple[tuple[TimeExpr, ...], ...]
    C: tuple[TimeExpr, ...]
    k: np.ndarray
    b: np.ndarray
    x0: np.ndarray
    u: TimeExpr = field(default_factory=lambda: TimeExpr.constant(0.0))

    def __post_init__(self):
        A = tuple(tuple(_expr(v) for v in row) for row in self.A)
        n = len(A)
        if n < 1:
            raise ShapeError("plant needs at least one state")
        if any(len(row) != n for row in A):
            raise ShapeError(f"A must be {n}x{n}, got rows of lengths {[len(r) for r in A]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "C", tuple(_expr(v) for v in self.C))
        object.__setattr__(self, "u", _expr(self.u))
        for name in ("k", "b", "x0"):
            vec = np.array(getattr(self, name), dtype=float).reshape(-1)
            vec.setflags(write=False)
            object.__setattr__(self, name, vec)
        for name in ("C", "k", "b", "x0"):
            if len(getattr(self, name)) != n:
                raise ShapeError(f"{name} must have length {n}, got {len(getattr(self, name))}")

    @property
    def n(self) -> int:
        return len(self.A)

    def A_at(self, t: float) -> np.ndarray:
        return np.array([[e(t) for e in row] for row in self.A])

    def C_at(self, t: float) -> np.ndarray:
        return np.array([e(t) for e in self.C])

    def u_at(self, t: float) -> float:
        return self.u(t)

    @property
    def theta_true(self) -> np.ndarray:
        """Regression parameters [e(0); k; b] with zero-initialised filters, e(0) = -x0."""
        return np.concatenate([-self.x0, self.k, self.b])


@dataclass
class TrajectoryLog:
    times: np.ndarray  # (N,)
    x: np.ndarray  # (N, n)
    y: np.ndarray  # (N,)
    u: np.ndarray  # (N,)

    def __post_init__(self):
        N = len(self.times)
        if not (len(self.x) == len(self.y) == len(self.u) == N):
            raise ShapeError("trajectory columns have unequal lengths")


def measure(spec: PlantSpec, t: float, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.n,):
        raise ShapeError(f"state has shape {x.shape}, expected ({spec.n},)")
    return float(spec.C_at(t) @ x)


def plant_rhs(spec: PlantSpec, t: float, x: np.ndarray) -> np.ndarray:
    y = spec.C_at(t) @ x
    return spec.A_at(t) @ x + spec.k * y + spec.b * spec.u_at(t)


def simulate_plant(spec: PlantSpec, dt: float, t_final: float) -> TrajectoryLog:
    """RK4 simulation of the plant alone, sampled at every step.

    Raises:
        DivergenceError: when a state component exceeds ``DIVERGENCE_LIMIT``
            in magnitude or turns non-finite.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not t_final > 0:
        raise ValueError(f"t_final must be positive, got {t_final}")
    n_steps = int(round(t_final / dt))
    sys = OdeSystem(spec.n, lambda t, x: plant_rhs(spec, t, x))
    times = dt * np.arange(n_steps + 1)
    xs = np.empty((n_steps + 1, spec.n))
    xs[0] = spec.x0
    x = xs[0].copy()
    for i in range(n_steps):
        try:
            x = rk4_step(sys, times[i], x, dt)
        except NonFiniteError as exc:
            raise DivergenceError(exc.t, f"x{(exc.index or 0) + 1}", "non-finite") from exc
        big = np.flatnonzero(np.abs(x) > DIVERGENCE_LIMIT)
        if big.size:
            raise DivergenceError(times[i + 1], f"x{big[0] + 1}", f"exceeded {DIVERGENCE_LIMIT:g}")
        xs[i + 1] = x
    y = np.array([measure(spec, t, xi) for t, xi in zip(times, xs)])
    u = np.array([spec.u_at(t) for t in times])
    return TrajectoryLog(times, xs, y, u)
