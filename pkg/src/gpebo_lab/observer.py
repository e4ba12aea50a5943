"""State reconstruction, error metrics and assumption monitors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gpebo import FilterState, ObserverConfig, ThetaVector, fundamental_matrix_checks
from .numerics import OdeSystem, eig2_real_parts, rk4_step
from .plant import PlantSpec, TrajectoryLog
from .simulation import JointLog, steps_for

__all__ = [
    "reconstruct_state",
    "reconstruct_log",
    "EstimateLog",
    "estimate_log",
    "AssumptionReport",
    "assumption_monitors",
    "SignalMetrics",
    "error_metrics",
]


def reconstruct_state(fs: FilterState, theta_hat) -> np.ndarray:
    """x_hat = xi - Phi e0_hat + eta k_hat + zeta b_hat."""
    th = theta_hat if isinstance(theta_hat, ThetaVector) else ThetaVector.split(theta_hat)
    return fs.xi - fs.phi @ th.e0 + fs.eta @ th.k + fs.zeta @ th.b


def reconstruct_log(run: JointLog, theta) -> np.ndarray:
    """Vectorised :func:`reconstruct_state` for a fixed or per-sample Theta."""
    theta = np.asarray(theta, dtype=float)
    n = run.n
    if theta.ndim == 1:
        theta = np.broadcast_to(theta, (len(run.times), 3 * n))
    e0, k, b = theta[:, :n], theta[:, n:2 * n], theta[:, 2 * n:]
    return (run.xi
            - np.einsum("tij,tj->ti", run.phi, e0)
            + np.einsum("tij,tj->ti", run.eta, k)
            + np.einsum("tij,tj->ti", run.zeta, b))


@dataclass
class EstimateLog:
    times: np.ndarray
    x_hat: np.ndarray
    theta_hat: np.ndarray
    state_err: np.ndarray
    param_err: np.ndarray


def estimate_log(run: JointLog) -> EstimateLog:
    if run.theta_hat is None:
        raise ValueError("run has no estimator output")
    x_hat = reconstruct_log(run, run.theta_hat)
    return EstimateLog(
        times=run.times,
        x_hat=x_hat,
        theta_hat=run.theta_hat,
        state_err=x_hat - run.x,
        param_err=run.theta_hat - run.plant.theta_true,
    )


@dataclass(frozen=True)
class AssumptionReport:
    phi_sup_norm: float
    bibs_integral_sup: float
    stable: bool
    phi_final_norm: float
    c1: float
    c2: float
    frozen_max_real_part: float | None = None


def assumption_monitors(cfg: ObserverConfig, plant: PlantSpec, dt: float, t_final: float,
                        *, c1: float = 100.0, c2: float = 100.0,
                        node_every: int | None = None) -> AssumptionReport:
    """Numerical checks of uniform stability and BIBS stability of A0(t).

    ``sup_t ||Phi(t)||`` comes from integrating ``Phi' = A0 Phi``. For the
    BIBS bound, ``sup_t int_0^t ||Phi(t, s) b|| ds`` is evaluated on a grid of
    quadrature nodes ``s_j`` (every ``node_every`` steps, 0.01 s by default): each
    ``v_j(t) = Phi(t, s_j) b`` solves ``v' = A0 v`` from ``v_j(s_j) = b`` and
    the whole bundle is propagated forward, so Phi is never inverted.
    """
    cfg.check(plant)
    n_steps = steps_for(dt, t_final)
    n = plant.n
    if node_every is None:
        node_every = max(1, int(round(0.01 / dt)))
    b = np.asarray(plant.b, dtype=float)

    def bundle(width):
        return OdeSystem(n * width, lambda t, flat: (cfg.A0_at(plant, t) @ flat.reshape(n, width)).ravel())

    # columns: Phi (n) then one column per quadrature node reached so far
    state = np.concatenate([np.eye(n), b.reshape(n, 1)], axis=1)
    sys = bundle(n + 1)
    phi_sup = float(np.linalg.norm(state[:, :n], 2))
    bibs_sup = 0.0
    h = node_every * dt
    for i in range(n_steps):
        width = state.shape[1]
        state = rk4_step(sys, i * dt, state.ravel(), dt).reshape(n, width)
        phi_sup = max(phi_sup, float(np.linalg.norm(state[:, :n], 2)))
        if (i + 1) % node_every == 0:
            state = np.concatenate([state, b.reshape(n, 1)], axis=1)
            sys = bundle(width + 1)
            norms = np.linalg.norm(state[:, n:], axis=0)
            integral = h * (norms.sum() - 0.5 * (norms[0] + norms[-1]))
            bibs_sup = max(bibs_sup, float(integral))
    phi_final = float(np.linalg.norm(state[:, :n], 2))

    frozen = None
    if n == 2:
        ts = np.linspace(0.0, t_final, 1001)
        frozen = float(max(eig2_real_parts(cfg.A0_at(plant, t))[0] for t in ts))
    ok = (math.isfinite(phi_sup) and math.isfinite(bibs_sup)
          and phi_sup <= c1 and bibs_sup <= c2)
    return AssumptionReport(phi_sup, bibs_sup, bool(ok), phi_final, float(c1), float(c2), frozen)


@dataclass(frozen=True)
class SignalMetrics:
    final_rms: float
    max_abs: float
    time_to_tolerance: float  # math.inf if the error never settles in the band


def _time_to_tolerance(times, err, band) -> float:
    outside = np.flatnonzero(~(np.abs(err) < band))
    if outside.size == 0:
        return float(times[0])
    last = outside[-1]
    if last == len(times) - 1:
        return math.inf
    return float(times[last + 1])


def error_metrics(traj: TrajectoryLog, est: EstimateLog, theta_true, *,
                  rel_tol: float = 0.05, final_fraction: float = 0.1) -> dict[str, SignalMetrics]:
    """Per-signal error summary.

    The tolerance band is ``rel_tol * (1 + |true value|)``: the true
    parameter for ``thetaerr`` signals and the true state sample for
    ``xerr`` signals. The final-window RMS covers the last ``final_fraction``
    of the logged horizon.
    """
    times = np.asarray(traj.times, dtype=float)
    if len(times) != len(est.times):
        raise ValueError("trajectory and estimate logs are not aligned")
    theta_true = np.asarray(theta_true, dtype=float)
    t_start = times[-1] - final_fraction * (times[-1] - times[0])
    tail = times >= t_start - 1e-12

    out = {}

    def add(name, err, true):
        band = rel_tol * (1.0 + np.abs(true))
        out[name] = SignalMetrics(
            final_rms=float(np.sqrt(np.mean(err[tail] ** 2))),
            max_abs=float(np.max(np.abs(err))),
            time_to_tolerance=_time_to_tolerance(times, err, band),
        )

    for i in range(est.param_err.shape[1]):
        add(f"thetaerr{i + 1}", est.param_err[:, i], theta_true[i])
    for i in range(est.state_err.shape[1]):
        add(f"xerr{i + 1}", est.state_err[:, i], traj.x[:, i])
    return out


def phi_report(run: JointLog, bound: float = 100.0):
    return fundamental_matrix_checks(run.times, run.phi, bound)
