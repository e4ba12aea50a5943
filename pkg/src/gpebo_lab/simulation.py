"""Joint fixed-step simulation of plant, filters and estimator.

Everything is advanced in one flattened state so the regression pair
``(z, Psi)`` is always formed from signals at the same instant. The state
layout is::

    x (n) | xi (n) | eta (n*n) | zeta (n*n) | Phi (n*n) | theta (r) | F (r*r)

where the estimator block is absent for filter-only runs and ``F`` is absent
for the gradient law. Matrices are row-major.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numba
import numpy as np

from .estimators import GradientConfig, LsFfConfig
from .gpebo import ObserverConfig, regression_arrays
from .numerics import jacobi_eigvalsh
from .plant import DIVERGENCE_LIMIT, DivergenceError, PlantSpec, TrajectoryLog
from .timefunc import _eval_table_py, compile_exprs

__all__ = ["JointLog", "simulate", "state_labels", "steps_for"]

Estimator = Union[LsFfConfig, GradientConfig, None]

EST_NONE, EST_LSFF, EST_GRADIENT = 0, 1, 2
ST_OK, ST_NONFINITE, ST_LIMIT, ST_NOT_PD = 0, 1, 2, 3
PD_RTOL = 1e-9

_eval_table = numba.njit(cache=True)(_eval_table_py)


@numba.njit(cache=True)
def _eval_grid(kinds, params, counts, times):
    out = np.empty((times.shape[0], counts.shape[0]))
    row = np.empty(counts.shape[0])
    for i in range(times.shape[0]):
        _eval_table(kinds, params, counts, times[i], row)
        out[i] = row
    return out


@numba.njit(cache=True)
def _f_frozen(F, r, M):
    # ||F||_2 <= ||F||_F <= sqrt(r) ||F||_2; only the middle band needs eigenvalues.
    fro = 0.0
    for i in range(r):
        for j in range(r):
            fro += F[i, j] * F[i, j]
    fro = math.sqrt(fro)
    if fro <= M:
        return False
    if fro > M * math.sqrt(r):
        return True
    ev = jacobi_eigvalsh(F)
    return max(abs(ev[0]), abs(ev[-1])) > M


@numba.njit(cache=True)
def _rhs(t, s, out, n, r, est, kinds, params, counts, kvec, bvec,
         gamma, beta, M, normalized, noise, vals, A0, psi, Fpsi):
    _eval_table(kinds, params, counts, t, vals)
    nn = n * n
    oxi = n
    oeta = 2 * n
    oze = oeta + nn
    oph = oze + nn
    oth = oph + nn
    oF = oth + r
    cC = nn
    cL = nn + n
    u = vals[nn + 2 * n]

    y = 0.0
    for j in range(n):
        y += vals[cC + j] * s[j]
    ym = y + noise

    for i in range(n):
        for j in range(n):
            A0[i, j] = vals[i * n + j] - vals[cL + i] * vals[cC + j]

    for i in range(n):
        acc = 0.0
        acc0 = 0.0
        for j in range(n):
            acc += vals[i * n + j] * s[j]
            acc0 += A0[i, j] * s[oxi + j]
        out[i] = acc + kvec[i] * y + bvec[i] * u
        out[oxi + i] = acc0 + vals[cL + i] * ym

    for i in range(n):
        for c in range(n):
            de = 0.0
            dz = 0.0
            dp = 0.0
            for j in range(n):
                a = A0[i, j]
                de += a * s[oeta + j * n + c]
                dz += a * s[oze + j * n + c]
                dp += a * s[oph + j * n + c]
            if i == c:
                de += ym
                dz += u
            out[oeta + i * n + c] = de
            out[oze + i * n + c] = dz
            out[oph + i * n + c] = dp

    if est == EST_NONE:
        return

    for c in range(n):
        p_phi = 0.0
        p_eta = 0.0
        p_ze = 0.0
        for i in range(n):
            ci = vals[cC + i]
            p_phi += ci * s[oph + i * n + c]
            p_eta += ci * s[oeta + i * n + c]
            p_ze += ci * s[oze + i * n + c]
        psi[c] = -p_phi
        psi[n + c] = p_eta
        psi[2 * n + c] = p_ze
    z = ym
    for i in range(n):
        z -= vals[cC + i] * s[oxi + i]
    err = z
    for j in range(r):
        err -= psi[j] * s[oth + j]

    if est == EST_LSFF:
        F = s[oF:oF + r * r].reshape((r, r))
        for i in range(r):
            acc = 0.0
            for j in range(r):
                acc += F[i, j] * psi[j]
            Fpsi[i] = acc
        for i in range(r):
            out[oth + i] = gamma * Fpsi[i] * err
        if _f_frozen(F, r, M):
            for i in range(r * r):
                out[oF + i] = 0.0
        else:
            for i in range(r):
                for j in range(r):
                    out[oF + i * r + j] = -gamma * Fpsi[i] * Fpsi[j] + beta * F[i, j]
    else:
        norm = 1.0
        if normalized:
            for j in range(r):
                norm += psi[j] * psi[j]
        for i in range(r):
            out[oth + i] = gamma * psi[i] * err / norm


@numba.njit(cache=True)
def _run(s0, dt, n_steps, log_every, n, r, est, kinds, params, counts, kvec, bvec,
         gamma, beta, M, normalized, noise, x_limit, pd_rtol):
    dim = s0.shape[0]
    n_log = n_steps // log_every + 1
    log = np.empty((n_log, dim))
    frozen = np.zeros(n_log, dtype=np.bool_)
    log[0] = s0
    s = s0.copy()
    k1 = np.empty(dim)
    k2 = np.empty(dim)
    k3 = np.empty(dim)
    k4 = np.empty(dim)
    tmp = np.empty(dim)
    vals = np.empty(counts.shape[0])
    A0 = np.empty((n, n))
    psi = np.empty(r)
    Fpsi = np.empty(r)
    oF = 2 * n + 3 * n * n + r
    h2 = 0.5 * dt
    if est == EST_LSFF:
        frozen[0] = _f_frozen(s0[oF:].reshape((r, r)), r, M)

    status = ST_OK
    fail_step = -1
    fail_index = -1
    logged = 1
    for i in range(n_steps):
        t = i * dt
        nz = noise[i] if noise.shape[0] > 0 else 0.0
        _rhs(t, s, k1, n, r, est, kinds, params, counts, kvec, bvec,
             gamma, beta, M, normalized, nz, vals, A0, psi, Fpsi)
        for j in range(dim):
            tmp[j] = s[j] + h2 * k1[j]
        _rhs(t + h2, tmp, k2, n, r, est, kinds, params, counts, kvec, bvec,
             gamma, beta, M, normalized, nz, vals, A0, psi, Fpsi)
        for j in range(dim):
            tmp[j] = s[j] + h2 * k2[j]
        _rhs(t + h2, tmp, k3, n, r, est, kinds, params, counts, kvec, bvec,
             gamma, beta, M, normalized, nz, vals, A0, psi, Fpsi)
        for j in range(dim):
            tmp[j] = s[j] + dt * k3[j]
        _rhs(t + dt, tmp, k4, n, r, est, kinds, params, counts, kvec, bvec,
             gamma, beta, M, normalized, nz, vals, A0, psi, Fpsi)
        for j in range(dim):
            tmp[j] = s[j] + (dt / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        if est == EST_LSFF:
            for a in range(r):
                for b in range(a + 1, r):
                    m = 0.5 * (tmp[oF + a * r + b] + tmp[oF + b * r + a])
                    tmp[oF + a * r + b] = m
                    tmp[oF + b * r + a] = m

        for j in range(dim):
            if not math.isfinite(tmp[j]):
                status = ST_NONFINITE
                fail_index = j
                break
        if status == ST_OK:
            for j in range(n):
                if abs(tmp[j]) > x_limit:
                    status = ST_LIMIT
                    fail_index = j
                    break
        if status != ST_OK:
            fail_step = i
            break

        for j in range(dim):
            s[j] = tmp[j]
        if (i + 1) % log_every == 0:
            log[logged] = s
            if est == EST_LSFF:
                F = s[oF:].reshape((r, r))
                frozen[logged] = _f_frozen(F, r, M)
                ev = jacobi_eigvalsh(F)
                if ev[0] < -pd_rtol * max(abs(ev[-1]), 1e-300):
                    status = ST_NOT_PD
                    fail_step = i
                    fail_index = oF
                    logged += 1
                    break
            logged += 1
    return log[:logged], frozen[:logged], status, fail_step, fail_index


def state_labels(n: int, est_kind: int) -> list[str]:
    r = 3 * n
    labels = [f"x{i + 1}" for i in range(n)] + [f"xi{i + 1}" for i in range(n)]
    for name in ("eta", "zeta", "phi"):
        labels += [f"{name}{i + 1}{j + 1}" for i in range(n) for j in range(n)]
    if est_kind != EST_NONE:
        labels += [f"thetahat{i + 1}" for i in range(r)]
    if est_kind == EST_LSFF:
        labels += [f"F{i + 1}_{j + 1}" for i in range(r) for j in range(r)]
    return labels


def steps_for(dt: float, t_final: float) -> int:
    """Number of RK4 steps; ``t_final`` must be a whole multiple of ``dt``."""
    if not (math.isfinite(dt) and dt > 0):
        raise ValueError(f"dt must be positive, got {dt}")
    if not (math.isfinite(t_final) and t_final > 0):
        raise ValueError(f"t_final must be positive, got {t_final}")
    n_steps = int(round(t_final / dt))
    if n_steps < 1 or abs(n_steps * dt - t_final) > 1e-9 * t_final:
        raise ValueError(f"t_final={t_final} is not a whole number of steps dt={dt}")
    return n_steps


@dataclass
class JointLog:
    """Logged joint run. ``aborted`` is set when the run stopped early."""

    plant: PlantSpec
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    C: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    zeta: np.ndarray
    phi: np.ndarray
    theta_hat: np.ndarray | None
    F: np.ndarray | None
    frozen: np.ndarray | None
    t_final: float
    aborted: DivergenceError | None = None

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def healthy(self) -> bool:
        return self.aborted is None

    def regression(self):
        """``(z, Psi)`` at every logged sample."""
        return regression_arrays(self.C, self.xi, self.eta, self.zeta, self.phi, self.y)

    def trajectory(self) -> TrajectoryLog:
        return TrajectoryLog(self.times, self.x, self.y, self.u)


def simulate(plant: PlantSpec, observer: ObserverConfig, estimator: Estimator = None, *,
             dt: float = 1e-3, t_final: float = 50.0, log_every: int = 1,
             noise_std: float = 0.0, noise_seed: int = 0,
             on_divergence: str = "raise") -> JointLog:
    """Integrate plant, filters and (optionally) the estimator with RK4.

    Args:
        log_every: keep every ``log_every``-th step (the initial state is
            always kept).
        noise_std: standard deviation of additive output noise, held
            constant over each step; the plant itself always sees the
            noiseless output.
        on_divergence: ``"raise"`` to raise :class:`DivergenceError`,
            ``"return"`` to return the log up to the failure with
            ``aborted`` set.

    Raises:
        DivergenceError: non-finite state, ``|x_i| > 1e9`` or loss of
            positive definiteness of F (when ``on_divergence="raise"``).
    """
    observer.check(plant)
    if on_divergence not in ("raise", "return"):
        raise ValueError("on_divergence must be 'raise' or 'return'")
    n_steps = steps_for(dt, t_final)
    if log_every < 1 or n_steps % log_every:
        raise ValueError(f"log_every={log_every} must divide the step count {n_steps}")
    n = plant.n
    r = 3 * n

    exprs = [e for row in plant.A for e in row] + list(plant.C) + list(observer.L) + [plant.u]
    table = compile_exprs(exprs)

    s0 = [plant.x0, np.zeros(n), np.zeros(n * n), np.zeros(n * n), np.eye(n).ravel()]
    gamma = beta = M = 1.0
    normalized = False
    if estimator is None:
        est = EST_NONE
    elif isinstance(estimator, LsFfConfig):
        est = EST_LSFF
        st = estimator.initial_state(r)
        s0 += [st.theta_hat, st.F.ravel()]
        gamma, beta, M = estimator.gamma, estimator.beta, estimator.M
    elif isinstance(estimator, GradientConfig):
        est = EST_GRADIENT
        s0 += [estimator.initial_theta(r)]
        gamma, normalized = estimator.gamma, estimator.normalized
    else:
        raise TypeError(f"unsupported estimator {estimator!r}")
    s0 = np.concatenate(s0).astype(float)

    noise = (np.random.default_rng(noise_seed).normal(0.0, noise_std, n_steps)
             if noise_std > 0 else np.empty(0))

    log, frozen, status, fail_step, fail_index = _run(
        s0, float(dt), n_steps, int(log_every), n, r, est,
        table.kinds, table.params, table.counts,
        np.ascontiguousarray(plant.k), np.ascontiguousarray(plant.b),
        float(gamma), float(beta), float(M), bool(normalized), noise,
        DIVERGENCE_LIMIT, PD_RTOL,
    )

    aborted = None
    if status != ST_OK:
        t_fail = fail_step * dt
        labels = state_labels(n, est)
        if status == ST_NONFINITE:
            aborted = DivergenceError(t_fail, labels[fail_index], "became non-finite")
        elif status == ST_LIMIT:
            aborted = DivergenceError(t_fail, labels[fail_index], f"exceeded {DIVERGENCE_LIMIT:g}")
        else:
            aborted = DivergenceError(t_fail, "F", "lost positive definiteness")
        if on_divergence == "raise":
            raise aborted

    N = len(log)
    times = dt * log_every * np.arange(N)
    grid = _eval_grid(table.kinds, table.params, table.counts, times)
    nn = n * n
    C = grid[:, nn:nn + n]
    u = grid[:, -1]
    x = log[:, :n]
    y = np.einsum("ti,ti->t", C, x)
    if noise.size:
        y = y + noise[np.minimum(np.arange(N) * log_every, n_steps - 1)]
    o = 2 * n
    xi = log[:, n:o]
    eta = log[:, o:o + nn].reshape(N, n, n)
    zeta = log[:, o + nn:o + 2 * nn].reshape(N, n, n)
    phi = log[:, o + 2 * nn:o + 3 * nn].reshape(N, n, n)
    oth = o + 3 * nn
    theta_hat = log[:, oth:oth + r] if est != EST_NONE else None
    F = log[:, oth + r:].reshape(N, r, r) if est == EST_LSFF else None
    return JointLog(
        plant=plant, times=times, x=x, y=y, u=u, C=C, xi=xi, eta=eta, zeta=zeta, phi=phi,
        theta_hat=theta_hat, F=F, frozen=frozen if est == EST_LSFF else None,
        t_final=float(t_final), aborted=aborted,
    )
