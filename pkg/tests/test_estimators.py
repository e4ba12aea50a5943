import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpebo_lab.estimators import (
    EstimatorState,
    GradientConfig,
    LsFfConfig,
    excitation_scan,
    gradient_rhs,
    lsff_rhs,
)
from gpebo_lab.gpebo import FilterState, RegressionSample, assemble_regression, filter_rhs
from gpebo_lab.numerics import OdeSystem, ShapeError, integrate, spectral_norm
from gpebo_lab.plant import measure, plant_rhs
from gpebo_lab.simulation import simulate


def scalar_lsff(theta_true, theta0, t_final=10.0, dt=1e-3):
    cfg = LsFfConfig(gamma=1.0, beta=0.0, f0=1.0, M=1e12)

    def rhs(t, s):
        st_ = EstimatorState(s[:1], s[1:].reshape(1, 1))
        d = lsff_rhs(cfg, st_, RegressionSample(t, theta_true, np.ones(1)))
        return np.concatenate([d.theta_hat, d.F.ravel()])

    n = int(round(t_final / dt))
    return integrate(OdeSystem(2, rhs), [theta0, 1.0], dt, n)


def scalar_gradient(gamma, theta_true, theta0, t_final=10.0, dt=1e-3):
    cfg = GradientConfig(gamma)
    rhs = lambda t, s: gradient_rhs(cfg, s, RegressionSample(t, theta_true, np.ones(1)))
    return integrate(OdeSystem(1, rhs), [theta0], dt, int(round(t_final / dt)))


def test_lsff_scalar_closed_form():
    times, s = scalar_lsff(theta_true=2.0, theta0=-1.0)
    for t in (1.0, 5.0, 10.0):
        i = int(round(t / 1e-3))
        assert abs(s[i, 1] - 1 / (1 + t)) < 1e-6
        assert abs((s[i, 0] - 2.0) - (-3.0) / (1 + t)) < 1e-6


@pytest.mark.parametrize("gamma", [1.0, 2.0])
def test_gradient_scalar_closed_form(gamma):
    times, s = scalar_gradient(gamma, theta_true=0.5, theta0=3.0)
    for t in (1.0, 5.0, 10.0):
        i = int(round(t / 1e-3))
        assert abs((s[i, 0] - 0.5) - 2.5 * math.exp(-gamma * t)) < 1e-6


def test_lsff_fixed_point_when_frozen():
    cfg = LsFfConfig(gamma=5.0, beta=1.0, f0=1.0, M=1.0)
    psi = np.array([1.0, -2.0, 0.5])
    theta = np.array([0.3, 0.1, -0.7])
    F = 3 * np.eye(3)
    d = lsff_rhs(cfg, EstimatorState(theta, F), RegressionSample(0.0, float(psi @ theta), psi))
    assert np.all(d.theta_hat == 0) and np.all(d.F == 0)


def test_lsff_active_gain_update():
    cfg = LsFfConfig(gamma=2.0, beta=0.5, f0=1.0, M=100.0)
    psi = np.array([1.0, 2.0])
    F = np.array([[2.0, 0.5], [0.5, 1.0]])
    d = lsff_rhs(cfg, EstimatorState(np.zeros(2), F), RegressionSample(0.0, 1.0, psi))
    Fp = F @ psi
    assert d.theta_hat == pytest.approx(2.0 * Fp * 1.0)
    assert d.F == pytest.approx(-2.0 * np.outer(Fp, Fp) + 0.5 * F)


def test_lsff_shape_mismatch():
    cfg = LsFfConfig(gamma=1.0, beta=1.0, f0=1.0, M=10.0)
    with pytest.raises(ShapeError):
        lsff_rhs(cfg, cfg.initial_state(3), RegressionSample(0.0, 0.0, np.ones(2)))


def test_gradient_examples():
    cfg = GradientConfig(3.0)
    psi = np.array([1.0, -1.0])
    theta = np.array([2.0, 5.0])
    assert np.all(gradient_rhs(cfg, theta, RegressionSample(0.0, float(psi @ theta), psi)) == 0)
    assert np.all(gradient_rhs(cfg, theta, RegressionSample(0.0, 42.0, np.zeros(2))) == 0)
    norm = gradient_rhs(GradientConfig(3.0, normalized=True), theta, RegressionSample(0.0, 0.0, psi))
    assert norm == pytest.approx(gradient_rhs(cfg, theta, RegressionSample(0.0, 0.0, psi)) / 3.0)


@pytest.mark.parametrize("kw", [
    dict(gamma=0.0), dict(gamma=-1.0), dict(f0=0.0), dict(M=0.0), dict(beta=-0.1),
    dict(gamma=math.inf), dict(beta=math.nan),
])
def test_lsff_config_validation(kw):
    base = dict(gamma=1.0, beta=1.0, f0=0.1, M=1e12)
    base.update(kw)
    with pytest.raises(ValueError):
        LsFfConfig(**base)


def test_lsff_initial_state():
    st_ = LsFfConfig(gamma=1000, beta=1, f0=0.1, M=1e12).initial_state(6)
    assert np.all(st_.theta_hat == 0)
    assert np.array_equal(st_.F, 10 * np.eye(6))
    with pytest.raises(ShapeError):
        LsFfConfig(gamma=1, beta=1, f0=1, M=1, theta0=[1, 2]).initial_state(6)


def test_kernel_matches_reference_lsff(example):
    plant, obs, est = example.plant_spec(), example.observer_config(), example.estimator_config()
    n, r = 2, 6
    nf = n + 3 * n * n

    def rhs(t, s):
        x = s[:n]
        fs = FilterState.unflatten(s[n:n + nf], n)
        st_ = EstimatorState(s[n + nf:n + nf + r], s[n + nf + r:].reshape(r, r))
        y = measure(plant, t, x)
        d = filter_rhs(obs, plant, t, fs, y, plant.u_at(t))
        de = lsff_rhs(est, st_, assemble_regression(plant, t, fs, y))
        return np.concatenate([plant_rhs(plant, t, x), d.flatten(), de.theta_hat, de.F.ravel()])

    st0 = est.initial_state(r)
    s0 = np.concatenate([plant.x0, FilterState.initial(n).flatten(), st0.theta_hat, st0.F.ravel()])
    _, ref = integrate(OdeSystem(len(s0), rhs), s0, 1e-4, 2000)
    run = simulate(plant, obs, est, dt=1e-4, t_final=0.2)
    assert np.allclose(run.theta_hat, ref[:, n + nf:n + nf + r], rtol=1e-9, atol=1e-10)
    assert np.allclose(run.F.reshape(-1, r * r), ref[:, n + nf + r:], rtol=1e-9, atol=1e-9)


def test_gain_matrix_symmetric_and_positive_definite(example_lsff_30):
    F = example_lsff_30.F
    assert example_lsff_30.healthy
    assert np.abs(F - F.transpose(0, 2, 1)).max() <= 1e-9 * np.abs(F).max()
    for Fi in F[::500]:
        s = np.linalg.svd(Fi, compute_uv=False)
        # Cholesky succeeds only for positive definite input
        np.linalg.cholesky(Fi)
        assert s[-1] > 0


def test_f_switch_freezes_permanently(example_lsff_full):
    run = example_lsff_full
    M = 1e12
    norms = np.array([spectral_norm(F) for F in run.F])
    first = int(np.flatnonzero(norms > M)[0])
    assert norms[first - 1] <= M
    assert np.all(run.frozen[first:]) and not np.any(run.frozen[:first])
    assert np.all(run.F[first:] == run.F[first])


def test_prediction_error_decreases_before_freeze(example_lsff_30):
    run = example_lsff_30
    z, psi = run.regression()
    e2 = (z - np.einsum("ti,ti->t", psi, run.theta_hat)) ** 2
    energies = []
    for T in (0, 5, 10, 15, 20):
        m = (run.times >= T - 1e-9) & (run.times <= T + 10 + 1e-9)
        energies.append(np.trapezoid(e2[m], run.times[m]))
    assert all(a > b for a, b in zip(energies, energies[1:])), energies


@pytest.mark.xfail(strict=True, reason="after the gain matrix reaches M the frozen law is too stiff "
                                       "for RK4 and the estimate overflows near t = 32 s")
def test_prediction_error_decreases_full_horizon(example_lsff_full):
    run = example_lsff_full
    assert run.healthy
    z, psi = run.regression()
    e2 = (z - np.einsum("ti,ti->t", psi, run.theta_hat)) ** 2
    energies = [np.trapezoid(e2[(run.times >= T) & (run.times <= T + 10)],
                             run.times[(run.times >= T) & (run.times <= T + 10)]) for T in range(0, 41, 5)]
    assert all(a > b for a, b in zip(energies, energies[1:]))


@pytest.mark.xfail(strict=True, reason="LS-FF overflows after the freeze and the gradient law "
                                       "does not reach 1e-3 at any stable tuning")
def test_gradient_and_lsff_agree(example, example_lsff_full):
    grad = simulate(example.plant_spec(), example.observer_config(), GradientConfig(1000.0, normalized=True),
                    dt=1e-4, t_final=50.0, log_every=10, on_divergence="return")
    for run in (example_lsff_full, grad):
        assert run.healthy
        z, psi = run.regression()
        assert abs(z[-1] - psi[-1] @ run.theta_hat[-1]) < 1e-3


def test_excitation_zero_regressor():
    t = np.linspace(0, 10, 1001)
    reps = excitation_scan(t, np.zeros((1001, 3)), 5.0)
    assert len(reps) == 2
    for rep in reps:
        assert np.all(rep.gram == 0) and rep.lambda_min == 0 and rep.lambda_max == 0


def test_excitation_sin_cos_period():
    t = np.linspace(0, 2 * np.pi, 20001)
    psi = np.column_stack([np.sin(t), np.cos(t)])
    (rep,) = excitation_scan(t, psi, 2 * np.pi)
    assert rep.gram == pytest.approx(np.pi * np.eye(2), abs=1e-7)
    assert rep.lambda_min == pytest.approx(np.pi, abs=1e-7)
    assert rep.lambda_max == pytest.approx(np.pi, abs=1e-7)


def test_excitation_skips_partial_window(caplog):
    t = np.linspace(0, 10, 101)
    with caplog.at_level(logging.WARNING):
        reps = excitation_scan(t, np.ones((101, 1)), 4.0)
    assert [r.t0 for r in reps] == [0.0, 4.0]
    assert "exceeds the log end" in caplog.text


def test_excitation_errors():
    t = np.linspace(0, 10, 101)
    with pytest.raises(ValueError, match="no complete window"):
        excitation_scan(t, np.ones((101, 1)), 20.0)
    with pytest.raises(ValueError):
        excitation_scan(t, np.ones((101, 1)), 0.0)
    with pytest.raises(ShapeError):
        excitation_scan(t, np.ones((50, 1)), 1.0)


def test_excitation_example_windows_positive(example_filters):
    _, psi = example_filters.regression()
    reps = excitation_scan(example_filters.times, psi, 10.0)
    assert len(reps) == 5
    for rep in reps:
        assert rep.lambda_min > 0
        assert rep.lambda_min <= rep.lambda_max
        assert np.allclose(rep.gram, rep.gram.T, rtol=0, atol=1e-12 * rep.lambda_max)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1), st.floats(0.5, 3.0))
def test_gram_psd_and_matches_eigensolver(r, seed, delta):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 6, 301)
    psi = rng.normal(size=(301, r)) * rng.uniform(0, 10, r)
    for rep in excitation_scan(t, psi, delta):
        assert rep.lambda_min >= -1e-10
        ev = np.linalg.eigvalsh(rep.gram)
        assert rep.lambda_max == pytest.approx(ev[-1], rel=1e-9)
        assert rep.lambda_min == pytest.approx(ev[0], rel=1e-6, abs=1e-9 * ev[-1])
