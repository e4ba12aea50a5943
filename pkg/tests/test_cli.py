import json

import numpy as np
import pytest

from gpebo_lab.cli import main, output_dir
from gpebo_lab.io import csv_columns, read_csv
from gpebo_lab.plotting import MissingColumnsError, plot_csv


def write(tmp_path, name, d):
    p = tmp_path / f"{name}.json"
    p.write_text(json.dumps(d))
    return p


def small(name="small", **over):
    d = {
        "name": name,
        "plant": {"A": [["1.8 + sin(0.5*t)", "-1"], ["5.2 + cos(2*t) + 0.5*sin(t)", "-4"]],
                  "C": ["1", "0"], "k": [-1, -3], "b": [1, 2], "x0": [3, -2], "u": "sin(t)"},
        "observer": {"L": ["0.8 + 0.5*sin(0.5*t)", "0.2 + cos(2*t)"]},
        "estimator": {"kind": "lsff", "gamma": 1000, "beta": 1, "f0": 0.1, "M": 1e12},
        "sim": {"dt": 1e-4, "t_final": 2, "log_interval": 1e-3},
    }
    d.update(over)
    return d


def test_run_writes_csv_and_report(tmp_path, capsys):
    src = write(tmp_path, "s", small())
    assert main(["run", str(src), "--out", str(tmp_path / "o")]) == 0
    cols = read_csv(tmp_path / "o" / "small.csv")
    n, r = 2, 6
    assert list(cols) == csv_columns(n, r)
    assert len(cols) == 1 + 2 + 2 * n + r + r + (n + r)
    assert len(cols["t"]) == 2001
    assert cols["theta1"][0] == -3 and cols["theta6"][-1] == 2
    rep = json.loads((tmp_path / "o" / "small_report.json").read_text())
    assert rep["healthy"] and rep["abort"] is None
    assert rep["theta_true"] == [-3, 2, -1, -3, 1, 2]
    assert set(rep["metrics"]) == {f"thetaerr{i}" for i in range(1, 7)} | {"xerr1", "xerr2"}
    assert rep["assumptions"]["stable"] is True
    assert {"healthy", "converged", "assumptions_ok"} <= set(rep["flags"])
    out = capsys.readouterr().out
    assert "scenario: small" in out and "thetaerr1" in out


def test_csv_error_columns_consistent(tmp_path):
    src = write(tmp_path, "s", small())
    main(["run", str(src), "--out", str(tmp_path), "--no-monitors"])
    c = read_csv(tmp_path / "small.csv")
    for i in (1, 2):
        assert np.allclose(c[f"xerr{i}"], c[f"xhat{i}"] - c[f"x{i}"], rtol=0, atol=1e-12)
    for i in range(1, 7):
        assert np.array_equal(c[f"thetaerr{i}"], c[f"thetahat{i}"] - c[f"theta{i}"])
    assert np.array_equal(c["u"], np.sin(c["t"]))
    assert np.array_equal(c["y"], c["x1"])


def test_run_is_deterministic(tmp_path):
    src = write(tmp_path, "s", small(outputs={"plots": True}))
    for d in ("a", "b"):
        assert main(["run", str(src), "--out", str(tmp_path / d)]) == 0
    for f in ["small.csv", "small_report.json"] + [f"small_fig{i:02d}.svg" for i in range(1, 10)]:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


def test_run_overrides_horizon(tmp_path):
    src = write(tmp_path, "s", small())
    assert main(["run", str(src), "--t-final", "0.5", "--dt", "5e-5", "--out", str(tmp_path)]) == 0
    assert read_csv(tmp_path / "small.csv")["t"][-1] == pytest.approx(0.5)


def test_run_t_final_zero_exits_2(tmp_path, capsys):
    src = write(tmp_path, "s", small())
    assert main(["run", str(src), "--t-final", "0", "--out", str(tmp_path)]) == 2
    assert "sim.t_final" in capsys.readouterr().err
    assert not (tmp_path / "small.csv").exists()


def test_run_misspelled_kind_exits_2(tmp_path, capsys):
    d = small()
    d["estimator"]["kind"] = "lsq"
    assert main(["run", str(write(tmp_path, "s", d)), "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "'lsff'" in err and "'gradient'" in err


def test_run_without_estimator_exits_2(tmp_path, capsys):
    d = small()
    del d["estimator"]
    assert main(["run", str(write(tmp_path, "s", d)), "--out", str(tmp_path)]) == 2
    assert "estimator" in capsys.readouterr().err


def test_run_divergence_exits_3_with_partial_log(tmp_path, capsys):
    d = small("blowup", plant={"A": [["5"]], "C": ["1"], "k": [0], "b": [0], "x0": [1], "u": "0"},
              observer={"L": ["6"]}, estimator={"kind": "gradient", "gamma": 1e-30},
              sim={"dt": 1e-3, "t_final": 10})
    assert main(["run", str(write(tmp_path, "s", d)), "--out", str(tmp_path), "--no-monitors"]) == 3
    err = capsys.readouterr().err
    assert "x1" in err and "t=4.14" in err
    cols = read_csv(tmp_path / "blowup.csv")
    assert 4.0 < cols["t"][-1] < 4.2
    rep = json.loads((tmp_path / "blowup_report.json").read_text())
    assert rep["healthy"] is False and rep["abort"]["signal"] == "x1"


def test_run_many_scenarios_in_parallel(tmp_path):
    a = write(tmp_path, "a", small("one", sim={"dt": 1e-4, "t_final": 1}))
    b = write(tmp_path, "b", small("two", sim={"dt": 1e-4, "t_final": 1}))
    assert main(["run", str(a), str(b), "--jobs", "2", "--out", str(tmp_path / "o"), "--no-monitors"]) == 0
    assert (tmp_path / "o" / "one" / "one.csv").exists()
    assert (tmp_path / "o" / "two" / "two.csv").exists()
    assert main(["run", str(a), "--jobs", "0"]) == 2


def test_output_dir_precedence(monkeypatch, tmp_path):
    monkeypatch.delenv("GPEBO_LAB_OUT", raising=False)
    assert output_dir(None).name == "gpebo_lab_out"
    monkeypatch.setenv("GPEBO_LAB_OUT", str(tmp_path / "env"))
    assert output_dir(None) == tmp_path / "env"
    assert output_dir(str(tmp_path / "cli")) == tmp_path / "cli"


def test_run_uses_env_out(monkeypatch, tmp_path):
    monkeypatch.setenv("GPEBO_LAB_OUT", str(tmp_path / "env"))
    src = write(tmp_path, "s", small(sim={"dt": 1e-4, "t_final": 0.5}))
    assert main(["run", str(src), "--no-monitors"]) == 0
    assert (tmp_path / "env" / "small.csv").exists()


def test_check_pe_example_exits_0(capsys):
    assert main(["check-pe", "paper_example", "--delta", "10"]) == 0
    out = capsys.readouterr().out
    assert "lambda_min" in out and out.count("\n") >= 6


def test_check_pe_zero_excitation_exits_1(capsys):
    assert main(["check-pe", "zero_excitation", "--delta", "5"]) == 1
    assert "0.000000e+00" in capsys.readouterr().out


def test_check_pe_window_too_long_exits_2(capsys):
    assert main(["check-pe", "zero_excitation", "--delta", "50"]) == 2
    assert "no complete window" in capsys.readouterr().err


def test_check_pe_stride(capsys):
    assert main(["check-pe", "zero_excitation", "--delta", "10", "--stride", "5"]) == 1
    rows = [ln for ln in capsys.readouterr().out.splitlines() if ln.strip()[:1].isdigit()]
    assert len(rows) == 3


def test_check_pe_bad_scenario_exits_2(tmp_path):
    assert main(["check-pe", str(tmp_path / "missing.json"), "--delta", "1"]) == 2


def test_plot_nine_figures(tmp_path):
    src = write(tmp_path, "s", small(sim={"dt": 1e-4, "t_final": 1}))
    main(["run", str(src), "--out", str(tmp_path), "--no-monitors"])
    assert main(["plot", str(tmp_path / "small.csv"), "--out", str(tmp_path / "figs")]) == 0
    svgs = sorted((tmp_path / "figs").glob("*.svg"))
    assert len(svgs) == 9
    text = svgs[0].read_text()
    assert text.lstrip().startswith("<?xml") and "<svg" in text


def test_plot_empty_csv_errors_without_files(tmp_path, capsys):
    p = tmp_path / "empty.csv"
    p.write_text("")
    assert main(["plot", str(p)]) == 2
    assert "empty" in capsys.readouterr().err
    assert not list(tmp_path.glob("*.svg"))


def test_plot_single_row(tmp_path):
    n, r = 2, 6
    p = tmp_path / "one.csv"
    cols = csv_columns(n, r)
    p.write_text(",".join(cols) + "\n" + ",".join(["0"] * len(cols)) + "\n")
    assert len(plot_csv(p)) == 9


def test_plot_missing_columns_named(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,thetahat1,thetahat2,thetaerr1\n0,1,2,3\n")
    with pytest.raises(MissingColumnsError) as info:
        plot_csv(p)
    msg = str(info.value)
    assert "thetaerr2" in msg and "xerr1" in msg


def test_read_csv_header_only(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("t,u\n")
    with pytest.raises(ValueError, match="no data rows"):
        read_csv(p)
