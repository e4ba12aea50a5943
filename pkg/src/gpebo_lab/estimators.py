"""Online estimators for ``z = Psi Theta`` and excitation diagnostics.

Least squares with forgetting factor::

    theta'  = gamma F Psi^T (z - Psi theta)
    F'      = -gamma F Psi^T Psi F + beta F    if ||F|| <= M
            = 0                                otherwise
    F(0)    = I / f0

``||F||`` is the spectral norm. Once F is frozen it cannot shrink again, so
the freeze is permanent for the rest of the run.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .gpebo import RegressionSample
from .numerics import ShapeError, jacobi_singular_values, spectral_norm

__all__ = [
    "LsFfConfig",
    "GradientConfig",
    "EstimatorState",
    "lsff_rhs",
    "gradient_rhs",
    "ExcitationReport",
    "excitation_scan",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LsFfConfig:
    gamma: float
    beta: float
    f0: float
    M: float
    theta0: np.ndarray | None = None

    def __post_init__(self):
        for name in ("gamma", "beta", "f0", "M"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value)):
                raise ValueError(f"{name} must be a finite number, got {value!r}")
            # beta = 0 is plain least squares without forgetting
            if value < 0 or (value == 0 and name != "beta"):
                kind = "non-negative" if name == "beta" else "positive"
                raise ValueError(f"{name} must be {kind}, got {value!r}")
        if self.theta0 is not None:
            object.__setattr__(self, "theta0", np.asarray(self.theta0, dtype=float).reshape(-1))

    def initial_state(self, r: int) -> "EstimatorState":
        theta = np.zeros(r) if self.theta0 is None else self.theta0.copy()
        if theta.shape != (r,):
            raise ShapeError(f"theta0 must have length {r}, got {theta.shape[0]}")
        return EstimatorState(theta, np.eye(r) / self.f0)


@dataclass(frozen=True, eq=False)
class GradientConfig:
    gamma: float
    normalized: bool = False
    theta0: np.ndarray | None = None

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be a finite positive number, got {self.gamma!r}")
        if self.theta0 is not None:
            object.__setattr__(self, "theta0", np.asarray(self.theta0, dtype=float).reshape(-1))

    def initial_theta(self, r: int) -> np.ndarray:
        theta = np.zeros(r) if self.theta0 is None else self.theta0.copy()
        if theta.shape != (r,):
            raise ShapeError(f"theta0 must have length {r}, got {theta.shape[0]}")
        return theta


@dataclass
class EstimatorState:
    theta_hat: np.ndarray
    F: np.ndarray = field(default=None)


def lsff_rhs(cfg: LsFfConfig, st: EstimatorState, sample: RegressionSample) -> EstimatorState:
    """Derivatives ``(theta', F')`` of the least-squares law."""
    psi = np.asarray(sample.psi, dtype=float).reshape(1, -1)
    r = psi.shape[1]
    if st.theta_hat.shape != (r,) or st.F.shape != (r, r):
        raise ShapeError(
            f"estimator state shapes {st.theta_hat.shape}, {st.F.shape} do not match Psi of length {r}"
        )
    err = sample.z - float((psi @ st.theta_hat)[0])
    dtheta = cfg.gamma * (st.F @ psi.T).ravel() * err
    if spectral_norm(st.F) <= cfg.M:
        dF = -cfg.gamma * st.F @ psi.T @ psi @ st.F + cfg.beta * st.F
    else:
        dF = np.zeros_like(st.F)
    return EstimatorState(dtheta, dF)


def gradient_rhs(cfg: GradientConfig, theta_hat, sample: RegressionSample) -> np.ndarray:
    """``theta' = gamma Psi^T (z - Psi theta)``, optionally divided by ``1 + Psi Psi^T``."""
    psi = np.asarray(sample.psi, dtype=float)
    err = sample.z - psi @ theta_hat
    d = cfg.gamma * psi * err
    if cfg.normalized:
        d = d / (1.0 + psi @ psi)
    return d


@dataclass(frozen=True)
class ExcitationReport:
    t0: float
    delta: float
    gram: np.ndarray
    lambda_min: float
    lambda_max: float


def excitation_scan(times, psi, delta: float, stride: float | None = None,
                    *, rtol: float = 1e-9) -> list[ExcitationReport]:
    """Windowed Gram matrices of the regressor and their extreme eigenvalues.

    For each window ``[t0, t0 + delta]`` (``t0`` stepping by ``stride`` from
    the first sample) the trapezoidal integral of ``Psi^T Psi`` is formed. It
    equals ``S^T S`` where the rows of ``S`` are the samples weighted by the
    square roots of the trapezoid weights; eigenvalues are obtained from the
    one-sided Jacobi singular values of ``S``.

    Windows that do not fit inside the log are skipped with a warning.

    Raises:
        ValueError: if ``delta`` or ``stride`` is not positive, or no complete
            window fits in the log.
    """
    times = np.asarray(times, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if psi.ndim != 2 or len(psi) != len(times):
        raise ShapeError(f"psi must be (N, r) aligned with times, got {psi.shape} and {times.shape}")
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    stride = delta if stride is None else stride
    if not stride > 0:
        raise ValueError(f"stride must be positive, got {stride}")
    if len(times) < 2:
        raise ValueError("need at least two samples to integrate")

    t_begin, t_end = times[0], times[-1]
    slack = rtol * max(1.0, abs(t_end))
    reports = []
    k = 0
    while True:
        t0 = t_begin + k * stride
        if t0 + delta > t_end + slack:
            if t0 < t_end - slack:
                log.warning("window [%g, %g] exceeds the log end %g; skipped", t0, t0 + delta, t_end)
            break
        lo = int(np.searchsorted(times, t0 - slack, side="left"))
        hi = int(np.searchsorted(times, t0 + delta + slack, side="right"))
        tw = times[lo:hi]
        if len(tw) < 2:
            log.warning("window [%g, %g] holds fewer than two samples; skipped", t0, t0 + delta)
            k += 1
            continue
        h = np.diff(tw)
        w = np.zeros(len(tw))
        w[:-1] += h / 2.0
        w[1:] += h / 2.0
        gram = (psi[lo:hi] * w[:, None]).T @ psi[lo:hi]
        S = psi[lo:hi] * np.sqrt(w)[:, None]
        sv = jacobi_singular_values(S)
        reports.append(ExcitationReport(float(t0), float(delta), gram,
                                        float(sv[0] ** 2), float(sv[-1] ** 2)))
        k += 1
    if not reports:
        raise ValueError(
            f"no complete window of length {delta:g} fits in the log [{t_begin:g}, {t_end:g}]"
        )
    return reports
