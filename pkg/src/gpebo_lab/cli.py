"""Command line front end: ``gpebo-lab run | check-pe | plot``.

Exit codes: 0 success, 1 check-pe found a window without excitation,
2 invalid input, 3 numeric divergence.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .estimators import excitation_scan
from .observer import assumption_monitors, error_metrics, estimate_log
from .plotting import plot_csv
from .scenario import ScenarioError, load_scenario
from .simulation import simulate

EXIT_OK, EXIT_NO_PE, EXIT_INVALID, EXIT_DIVERGED = 0, 1, 2, 3
OUT_ENV = "GPEBO_LAB_OUT"
DEFAULT_OUT = "gpebo_lab_out"

log = logging.getLogger("gpebo_lab")


def output_dir(cli_value: str | None) -> Path:
    """``--out`` wins over ``$GPEBO_LAB_OUT``, which wins over the default."""
    if cli_value:
        return Path(cli_value)
    env = os.environ.get(OUT_ENV)
    return Path(env) if env else Path(DEFAULT_OUT)


def _err(msg: str):
    print(f"error: {msg}", file=sys.stderr)


def run_one(source, out_dir: Path, dt=None, t_final=None, monitors=True) -> tuple[int, list[str]]:
    """Run one scenario; returns ``(exit code, lines to print)``."""
    lines = []
    try:
        sc = load_scenario(source, dt=dt, t_final=t_final)
    except ScenarioError as exc:
        return EXIT_INVALID, [f"error: {source}: {exc}"]
    if sc.estimator is None:
        return EXIT_INVALID, [f"error: {source}: estimator: required for 'run' (use check-pe for filters only)"]

    plant = sc.plant_spec()
    observer = sc.observer_config()
    run = simulate(plant, observer, sc.estimator_config(), dt=sc.sim.dt, t_final=sc.sim.t_final,
                   log_every=sc.sim.log_every, noise_std=sc.plant.noise_std,
                   noise_seed=sc.plant.noise_seed, on_divergence="return")
    est = estimate_log(run)
    csv_path = io.write_csv(out_dir / sc.csv_name(), run, est)

    with np.errstate(invalid="ignore", over="ignore"):
        metrics = error_metrics(run.trajectory(), est, plant.theta_true, rel_tol=sc.monitors.rel_tol)
    assumptions = None
    if monitors:
        mdt = sc.monitors.dt
        try:
            assumptions = assumption_monitors(observer, plant, mdt, sc.sim.t_final,
                                              c1=sc.monitors.c1, c2=sc.monitors.c2)
        except ValueError as exc:
            lines.append(f"warning: assumption monitors skipped: {exc}")
    settings = {"dt": sc.sim.dt, "t_final": sc.sim.t_final, "log_every": sc.sim.log_every,
                "estimator": sc.estimator.model_dump(), "rel_tol": sc.monitors.rel_tol}
    report = io.build_report(sc.name, run, metrics, assumptions, settings)
    io.write_report(out_dir / sc.report_name(), report)
    lines.append(io.format_report(report))
    lines.append(f"wrote {csv_path}")
    if sc.outputs.plots:
        for p in plot_csv(csv_path):
            lines.append(f"wrote {p}")

    if not run.healthy:
        a = run.aborted
        lines.append(f"error: divergence at t={a.t:.6g}: {a.signal} {a.reason}")
        return EXIT_DIVERGED, lines
    return EXIT_OK, lines


def _run_job(args):
    return run_one(*args)


def cmd_run(ns) -> int:
    base = output_dir(ns.out)
    many = len(ns.scenarios) > 1
    jobs = []
    for src in ns.scenarios:
        sub = base
        if many:
            try:
                sub = base / load_scenario(src).name
            except ScenarioError:
                sub = base / Path(src).stem
        jobs.append((src, sub, ns.dt, ns.t_final, not ns.no_monitors))
    if ns.jobs > 1 and many:
        with ProcessPoolExecutor(max_workers=ns.jobs) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    worst = EXIT_OK
    for code, lines in results:
        for line in lines:
            print(line, file=sys.stderr if line.startswith("error:") else sys.stdout)
        worst = max(worst, code)
    return worst


def cmd_check_pe(ns) -> int:
    try:
        sc = load_scenario(ns.scenario, dt=ns.dt, t_final=ns.t_final)
    except ScenarioError as exc:
        _err(f"{ns.scenario}: {exc}")
        return EXIT_INVALID
    run = simulate(sc.plant_spec(), sc.observer_config(), None, dt=sc.sim.dt,
                   t_final=sc.sim.t_final, log_every=sc.sim.log_every,
                   noise_std=sc.plant.noise_std, noise_seed=sc.plant.noise_seed,
                   on_divergence="return")
    if not run.healthy:
        a = run.aborted
        _err(f"divergence at t={a.t:.6g}: {a.signal} {a.reason}")
        return EXIT_DIVERGED
    _, psi = run.regression()
    try:
        reports = excitation_scan(run.times, psi, ns.delta, ns.stride)
    except ValueError as exc:
        _err(str(exc))
        return EXIT_INVALID
    print(f"{'t0':>10}{'t1':>10}{'lambda_min':>16}{'lambda_max':>16}")
    for rep in reports:
        print(f"{rep.t0:>10.4g}{rep.t0 + rep.delta:>10.4g}{rep.lambda_min:>16.6e}{rep.lambda_max:>16.6e}")
    lam = min(rep.lambda_min for rep in reports)
    if lam > 0:
        print(f"excitation ok: min lambda_min = {lam:.6e}")
        return EXIT_OK
    print(f"no excitation: min lambda_min = {lam:.6e}")
    return EXIT_NO_PE


def cmd_plot(ns) -> int:
    try:
        paths = plot_csv(ns.csv, ns.out)
    except (OSError, ValueError) as exc:
        _err(str(exc))
        return EXIT_INVALID
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gpebo-lab", description="GPEBO adaptive observer workbench")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate scenarios and write CSV, report and plots")
    r.add_argument("scenarios", nargs="+", help="scenario JSON files or bundled names")
    r.add_argument("--dt", type=float)
    r.add_argument("--t-final", type=float, dest="t_final")
    r.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    r.add_argument("--jobs", type=int, default=1, help="parallel scenarios")
    r.add_argument("--no-monitors", action="store_true", help="skip the stability monitors")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check-pe", help="windowed excitation check of the regressor")
    c.add_argument("scenario")
    c.add_argument("--delta", type=float, required=True, help="window length, s")
    c.add_argument("--stride", type=float, help="window step, s (default: delta)")
    c.add_argument("--dt", type=float)
    c.add_argument("--t-final", type=float, dest="t_final")
    c.set_defaults(func=cmd_check_pe)

    g = sub.add_parser("plot", help="SVG plots from a run CSV")
    g.add_argument("csv")
    g.add_argument("--out", help="directory for the SVG files (default: next to the CSV)")
    g.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    ns = build_parser().parse_args(argv)
    if getattr(ns, "jobs", 1) < 1:
        _err("--jobs must be at least 1")
        return EXIT_INVALID
    return ns.func(ns)


if __name__ == "__main__":
    sys.exit(main())
