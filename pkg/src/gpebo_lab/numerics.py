"""Dense matrix helpers, Jacobi eigensolvers and a fixed-step RK4 integrator.

Matrices are plain ``numpy`` arrays (row-major float64). The ``mat_*`` helpers
only add shape checking with readable errors on top of numpy arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np

__all__ = [
    "ShapeError",
    "NonFiniteError",
    "mat_add",
    "mat_sub",
    "mat_mul",
    "transpose",
    "scale",
    "eig2_real_parts",
    "jacobi_eigvalsh",
    "sym_extreme_eigs",
    "spectral_norm",
    "jacobi_singular_values",
    "OdeSystem",
    "rk4_step",
    "integrate",
]


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    """Raised when an ODE right-hand side produces NaN or inf."""

    def __init__(self, t: float, index: int | None = None):
        self.t = t
        self.index = index
        where = "" if index is None else f" (component {index})"
        super().__init__(f"non-finite derivative at t={t:.6g}{where}")


def _as2d(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        return a.reshape(-1, 1)
    if a.ndim != 2:
        raise ShapeError(f"expected a matrix or vector, got array of shape {a.shape}")
    return a


def _same_shape(a, b, op):
    a, b = _as2d(a), _as2d(b)
    if a.shape != b.shape:
        raise ShapeError(f"cannot {op} matrices of shapes {a.shape} and {b.shape}")
    return a, b


def mat_add(a, b) -> np.ndarray:
    a, b = _same_shape(a, b, "add")
    return a + b


def mat_sub(a, b) -> np.ndarray:
    a, b = _same_shape(a, b, "subtract")
    return a - b


def mat_mul(a, b) -> np.ndarray:
    """Matrix product; 1-D inputs are treated as column vectors."""
    a, b = _as2d(a), _as2d(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply matrices of shapes {a.shape} and {b.shape}")
    return a @ b


def transpose(a) -> np.ndarray:
    return _as2d(a).T.copy()


def scale(a, s: float) -> np.ndarray:
    return float(s) * _as2d(a)


def eig2_real_parts(m) -> tuple[float, float]:
    """Real parts of the eigenvalues of a 2x2 matrix, larger first.

    Uses the characteristic polynomial ``l^2 - tr*l + det``.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (2, 2):
        raise ShapeError(f"eig2_real_parts needs a 2x2 matrix, got {m.shape}")
    tr = m[0, 0] + m[1, 1]
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    disc = tr * tr / 4.0 - det
    if disc >= 0.0:
        root = math.sqrt(disc)
        return tr / 2.0 + root, tr / 2.0 - root
    return tr / 2.0, tr / 2.0


@numba.njit(cache=True)
def jacobi_eigvalsh(a, tol=1e-12, max_sweeps=100):
    """Eigenvalues (ascending) of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps stop once every off-diagonal entry is below ``tol`` times the
    Frobenius norm of the matrix.
    """
    n = a.shape[0]
    m = a.copy()
    fro = 0.0
    for i in range(n):
        for j in range(n):
            fro += m[i, j] * m[i, j]
    fro = math.sqrt(fro)
    threshold = tol * fro
    for _ in range(max_sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(m[p, q]) > off:
                    off = abs(m[p, q])
        if off <= threshold or off == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = m[p, q]
                if apq == 0.0:
                    continue
                theta = (m[q, q] - m[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + math.sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + math.sqrt(1.0 + theta * theta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    mkp = m[k, p]
                    mkq = m[k, q]
                    m[k, p] = c * mkp - s * mkq
                    m[k, q] = s * mkp + c * mkq
                for k in range(n):
                    mpk = m[p, k]
                    mqk = m[q, k]
                    m[p, k] = c * mpk - s * mqk
                    m[q, k] = s * mpk + c * mqk
    out = np.empty(n)
    for i in range(n):
        out[i] = m[i, i]
    return np.sort(out)


def sym_extreme_eigs(a) -> tuple[float, float]:
    """(lambda_min, lambda_max) of a symmetric matrix."""
    ev = jacobi_eigvalsh(np.ascontiguousarray(a, dtype=float))
    return float(ev[0]), float(ev[-1])


def spectral_norm(a) -> float:
    """Largest singular value, via Jacobi on ``a.T @ a``."""
    a = _as2d(a)
    if a.size == 0:
        return 0.0
    lo, hi = sym_extreme_eigs(a.T @ a)
    return math.sqrt(max(hi, 0.0))


def jacobi_singular_values(s, tol=1e-15, max_sweeps=60) -> np.ndarray:
    """Singular values (ascending) of a tall matrix by one-sided Jacobi.

    Columns are rotated pairwise until mutually orthogonal; the singular values
    are the final column norms. Squared, they are the eigenvalues of ``s.T @ s``
    without ever forming that product, so tiny eigenvalues of a badly scaled
    Gram matrix keep their relative accuracy and can never come out negative.
    """
    w = np.array(s, dtype=float, copy=True)
    if w.ndim != 2:
        raise ShapeError(f"expected a 2-D array, got shape {w.shape}")
    ncol = w.shape[1]
    for _ in range(max_sweeps):
        rotated = False
        for i in range(ncol - 1):
            for j in range(i + 1, ncol):
                a = w[:, i] @ w[:, i]
                b = w[:, j] @ w[:, j]
                c = w[:, i] @ w[:, j]
                if c == 0.0 or abs(c) <= tol * math.sqrt(a * b):
                    continue
                rotated = True
                zeta = (b - a) / (2.0 * c)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                cs = 1.0 / math.sqrt(1.0 + t * t)
                sn = cs * t
                wi = w[:, i].copy()
                w[:, i] = cs * wi - sn * w[:, j]
                w[:, j] = sn * wi + cs * w[:, j]
        if not rotated:
            break
    return np.sort(np.sqrt(np.einsum("ij,ij->j", w, w)))


@dataclass(frozen=True)
class OdeSystem:
    """Flattened ODE ``d(state)/dt = rhs(t, state)``."""

    dimension: int
    rhs: Callable[[float, np.ndarray], np.ndarray]

    def __call__(self, t: float, state: np.ndarray) -> np.ndarray:
        out = np.asarray(self.rhs(t, state), dtype=float)
        if out.shape != (self.dimension,):
            raise ShapeError(
                f"rhs returned shape {out.shape}, expected ({self.dimension},)"
            )
        return out


def _checked(sys: OdeSystem, t: float, y: np.ndarray) -> np.ndarray:
    d = sys(t, y)
    if not np.all(np.isfinite(d)):
        raise NonFiniteError(t, int(np.flatnonzero(~np.isfinite(d))[0]))
    return d


def rk4_step(sys: OdeSystem, t: float, state: np.ndarray, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step of size ``dt`` from ``(t, state)``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    y = np.asarray(state, dtype=float)
    if y.shape != (sys.dimension,):
        raise ShapeError(f"state has shape {y.shape}, expected ({sys.dimension},)")
    h2 = 0.5 * dt
    k1 = _checked(sys, t, y)
    k2 = _checked(sys, t + h2, y + h2 * k1)
    k3 = _checked(sys, t + h2, y + h2 * k2)
    k4 = _checked(sys, t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(sys: OdeSystem, state0, dt: float, n_steps: int, t0: float = 0.0,
              post_step: Callable[[np.ndarray], np.ndarray] | None = None):
    """Run ``n_steps`` RK4 steps; returns ``(times, states)`` including the start.

    Times are computed as ``t0 + i*dt`` so long runs do not accumulate drift.
    """
    y = np.asarray(state0, dtype=float).copy()
    states = np.empty((n_steps + 1, sys.dimension))
    states[0] = y
    for i in range(n_steps):
        y = rk4_step(sys, t0 + i * dt, y, dt)
        if post_step is not None:
            y = post_step(y)
        states[i + 1] = y
    times = t0 + dt * np.arange(n_steps + 1)
    return times, states
