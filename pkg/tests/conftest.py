import pytest

from gpebo_lab import load_scenario, simulate

THETA_TRUE = [-3.0, 2.0, -1.0, -3.0, 1.0, 2.0]


@pytest.fixture(scope="session")
def example():
    return load_scenario("paper_example")


@pytest.fixture(scope="session")
def example_filters(example):
    """Plant and filters only, dt = 1e-3 over [0, 50]."""
    return simulate(example.plant_spec(), example.observer_config(), None, dt=1e-3, t_final=50.0)


@pytest.fixture(scope="session")
def example_lsff_30(example):
    """LS-FF run up to t = 30, before the gain matrix reaches M."""
    return simulate(example.plant_spec(), example.observer_config(), example.estimator_config(),
                    dt=1e-4, t_final=30.0, log_every=10)


@pytest.fixture(scope="session")
def example_lsff_full(example):
    """The bundled LS-FF run over the full horizon; it aborts after the F freeze."""
    return simulate(example.plant_spec(), example.observer_config(), example.estimator_config(),
                    dt=1e-4, t_final=50.0, log_every=10, on_divergence="return")
