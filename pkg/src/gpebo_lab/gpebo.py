"""Filter cascade that turns state estimation into a linear regression.

With ``A0(t) = A(t) - L(t) C(t)^T`` the filters

    xi'   = A0 xi   + L y,    xi(0)   = 0
    eta'  = A0 eta  + I y,    eta(0)  = 0
    zeta' = A0 zeta + I u,    zeta(0) = 0
    Phi'  = A0 Phi,           Phi(0)  = I

make the error ``e = xi + eta k + zeta b - x`` obey ``e(t) = Phi(t) e(0)``,
hence ``x = xi + eta k + zeta b - Phi e(0)``. Multiplying by ``C^T`` gives the
scalar regression ``z = Psi Theta`` with

    z     = y - C^T xi
    Psi   = [-C^T Phi | C^T eta | C^T zeta]
    Theta = [e(0); k; b],   e(0) = -x(0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import ShapeError, mat_mul, mat_sub
from .plant import PlantSpec
from .timefunc import TimeExpr, parse_expr

__all__ = [
    "ObserverConfig",
    "FilterState",
    "RegressionSample",
    "ThetaVector",
    "filter_rhs",
    "assemble_regression",
    "regression_arrays",
    "PhiReport",
    "fundamental_matrix_checks",
]


@dataclass(frozen=True)
class ObserverConfig:
    L: tuple[TimeExpr, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "L",
            tuple(e if isinstance(e, TimeExpr) else
                  parse_expr(e) if isinstance(e, str) else TimeExpr.constant(e)
                  for e in self.L),
        )

    @property
    def n(self) -> int:
        return len(self.L)

    def L_at(self, t: float) -> np.ndarray:
        return np.array([e(t) for e in self.L])

    def check(self, plant: PlantSpec) -> None:
        if self.n != plant.n:
            raise ShapeError(f"L has length {self.n} but the plant has n={plant.n}")

    def A0_at(self, plant: PlantSpec, t: float) -> np.ndarray:
        """A(t) - L(t) C(t)^T, built from the entry expressions at time t."""
        L = self.L_at(t)
        C = plant.C_at(t)
        return mat_sub(plant.A_at(t), mat_mul(L, C.reshape(1, -1)))


@dataclass
class FilterState:
    xi: np.ndarray
    eta: np.ndarray
    zeta: np.ndarray
    phi: np.ndarray

    @classmethod
    def initial(cls, n: int) -> "FilterState":
        return cls(np.zeros(n), np.zeros((n, n)), np.zeros((n, n)), np.eye(n))

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.xi, self.eta.ravel(), self.zeta.ravel(), self.phi.ravel()])

    @classmethod
    def unflatten(cls, flat, n: int) -> "FilterState":
        flat = np.asarray(flat, dtype=float)
        nn = n * n
        return cls(
            flat[:n].copy(),
            flat[n:n + nn].reshape(n, n).copy(),
            flat[n + nn:n + 2 * nn].reshape(n, n).copy(),
            flat[n + 2 * nn:n + 3 * nn].reshape(n, n).copy(),
        )


@dataclass(frozen=True)
class RegressionSample:
    t: float
    z: float
    psi: np.ndarray  # (3n,)


@dataclass(frozen=True)
class ThetaVector:
    e0: np.ndarray
    k: np.ndarray
    b: np.ndarray

    @classmethod
    def split(cls, theta) -> "ThetaVector":
        theta = np.asarray(theta, dtype=float)
        if theta.ndim != 1 or len(theta) % 3:
            raise ShapeError(f"Theta must be a vector of length 3n, got shape {theta.shape}")
        n = len(theta) // 3
        return cls(theta[:n], theta[n:2 * n], theta[2 * n:])

    def concat(self) -> np.ndarray:
        return np.concatenate([self.e0, self.k, self.b])


def filter_rhs(cfg: ObserverConfig, plant: PlantSpec, t: float, fs: FilterState,
               y: float, u: float) -> FilterState:
    """Time derivative of every filter state at ``t``."""
    A0 = cfg.A0_at(plant, t)
    eye = np.eye(cfg.n)
    return FilterState(
        xi=A0 @ fs.xi + cfg.L_at(t) * y,
        eta=A0 @ fs.eta + eye * y,
        zeta=A0 @ fs.zeta + eye * u,
        phi=A0 @ fs.phi,
    )


def assemble_regression(plant: PlantSpec, t: float, fs: FilterState, y: float) -> RegressionSample:
    C = plant.C_at(t)
    z = y - C @ fs.xi
    psi = np.concatenate([-(C @ fs.phi), C @ fs.eta, C @ fs.zeta])
    return RegressionSample(t, float(z), psi)


def regression_arrays(C: np.ndarray, xi: np.ndarray, eta: np.ndarray, zeta: np.ndarray,
                      phi: np.ndarray, y: np.ndarray):
    """Vectorised ``assemble_regression`` over a log.

    Args:
        C: (N, n) output vectors per sample.
        xi: (N, n); eta, zeta, phi: (N, n, n); y: (N,).

    Returns:
        ``(z, psi)`` with shapes (N,) and (N, 3n).
    """
    z = y - np.einsum("ti,ti->t", C, xi)
    psi = np.concatenate(
        [
            -np.einsum("ti,tij->tj", C, phi),
            np.einsum("ti,tij->tj", C, eta),
            np.einsum("ti,tij->tj", C, zeta),
        ],
        axis=1,
    )
    return z, psi


@dataclass(frozen=True)
class PhiReport:
    sup_norm: float
    t_at_sup: float
    bound: float
    violated: bool


def fundamental_matrix_checks(times, phi_log, bound: float = 100.0) -> PhiReport:
    """Supremum of the spectral norm of Phi(t) over a logged run."""
    phi_log = np.asarray(phi_log, dtype=float)
    norms = np.linalg.norm(phi_log, ord=2, axis=(1, 2))
    i = int(np.argmax(norms))
    sup = float(norms[i])
    return PhiReport(sup, float(np.asarray(times)[i]), float(bound),
                     bool(not np.isfinite(sup) or sup > bound))
