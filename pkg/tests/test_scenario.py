import json

import numpy as np
import pytest

from gpebo_lab.estimators import GradientConfig, LsFfConfig
from gpebo_lab.scenario import ScenarioError, bundled_scenarios, load_scenario


def example_dict():
    from importlib import resources
    return json.loads((resources.files("gpebo_lab") / "scenarios" / "paper_example.json").read_text())


def test_bundled_names():
    assert {"paper_example", "zero_excitation"} <= set(bundled_scenarios())


def test_bundled_example_contents(example):
    plant = example.plant_spec()
    assert example.n == 2
    assert plant.theta_true.tolist() == [-3, 2, -1, -3, 1, 2]
    assert plant.A_at(0.0).tolist() == [[1.8, -1.0], [6.2, -4.0]]
    assert plant.u_at(np.pi / 2) == pytest.approx(1.0)
    est = example.estimator_config()
    assert isinstance(est, LsFfConfig)
    assert (est.gamma, est.beta, est.f0, est.M) == (1000, 1, 0.1, 1e12)
    assert example.sim.log_every == 10


def test_load_from_path_and_dict(tmp_path):
    d = example_dict()
    p = tmp_path / "s.json"
    p.write_text(json.dumps(d))
    assert load_scenario(p).name == load_scenario(d).name == "paper_example"


def test_overrides():
    sc = load_scenario("paper_example", dt=1e-3, t_final=2.0)
    assert sc.sim.dt == 1e-3 and sc.sim.t_final == 2.0 and sc.sim.log_every == 1


def test_gradient_estimator_config():
    est = load_scenario("zero_excitation").estimator_config()
    assert isinstance(est, GradientConfig) and est.gamma == 1


def mutate(path, value):
    d = example_dict()
    node = d
    for key in path[:-1]:
        node = node[key]
    if value is KeyError:
        del node[path[-1]]
    else:
        node[path[-1]] = value
    return d


@pytest.mark.parametrize("path, value, needle", [
    (("sim", "t_final"), 0, "sim.t_final"),
    (("sim", "dt"), -1e-3, "sim.dt"),
    (("sim", "t_final"), 0.00015, "whole number of steps"),
    (("estimator", "kind"), "lsf", "'lsff'"),
    (("estimator", "f0"), 0, "estimator.lsff.f0"),
    (("estimator", "gamma"), -5, "gamma"),
    (("estimator", "alpha"), 1000, "alpha"),
    (("plant", "A"), [["1", "2"], ["3"]], "A row 1"),
    (("plant", "C"), ["1"], "C has length 1"),
    (("plant", "u"), "sin(t", "plant.u"),
    (("plant", "A"), [["1,8", "-1"], ["5", "-4"]], "plant.A"),
    (("observer", "L"), ["1", "2", "3"], "observer.L"),
    (("plant", "k"), KeyError, "plant.k"),
    (("extra",), 1, "extra"),
])
def test_validation_names_field(path, value, needle):
    with pytest.raises(ScenarioError) as info:
        load_scenario(mutate(path, value))
    assert needle in str(info.value)


def test_misspelled_kind_lists_allowed_values():
    with pytest.raises(ScenarioError) as info:
        load_scenario(mutate(("estimator", "kind"), "rls"))
    assert "lsff" in str(info.value) and "gradient" in str(info.value)


def test_incompatible_dt_override_is_rejected():
    with pytest.raises(ScenarioError, match="log_interval"):
        load_scenario("paper_example", dt=4e-4)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ScenarioError, match="not found"):
        load_scenario(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ScenarioError, match="invalid JSON"):
        load_scenario(bad)
    arr = tmp_path / "arr.json"
    arr.write_text("[1, 2]")
    with pytest.raises(ScenarioError, match="JSON object"):
        load_scenario(arr)


def test_numbers_accepted_as_expressions():
    d = mutate(("plant", "A"), [[1.8, -1], ["5.2 + cos(2*t)", -4]])
    sc = load_scenario(d)
    assert sc.plant_spec().A_at(0.0).tolist() == [[1.8, -1.0], [6.2, -4.0]]
