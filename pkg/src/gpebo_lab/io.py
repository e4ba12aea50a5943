"""CSV logs and JSON/text run reports."""

from __future__ import annotations

import json
import math
import re
from pathlib import Path

import numpy as np

from .observer import AssumptionReport, EstimateLog, SignalMetrics
from .simulation import JointLog

__all__ = ["csv_columns", "write_csv", "read_csv", "build_report", "write_report", "format_report"]


def csv_columns(n: int, r: int) -> list[str]:
    """Header of a run log: ``1 + 2 + 2n + r + r + (n + r)`` columns."""
    return (
        ["t", "u", "y"]
        + [f"x{i + 1}" for i in range(n)]
        + [f"xhat{i + 1}" for i in range(n)]
        + [f"thetahat{i + 1}" for i in range(r)]
        + [f"theta{i + 1}" for i in range(r)]
        + [f"xerr{i + 1}" for i in range(n)]
        + [f"thetaerr{i + 1}" for i in range(r)]
    )


def write_csv(path, run: JointLog, est: EstimateLog) -> Path:
    n = run.n
    r = 3 * n
    N = len(run.times)
    theta_true = np.broadcast_to(run.plant.theta_true, (N, r))
    table = np.column_stack([
        run.times, run.u, run.y, run.x, est.x_hat, est.theta_hat, theta_true,
        est.state_err, est.param_err,
    ])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, table, fmt="%.17g", delimiter=",",
               header=",".join(csv_columns(n, r)), comments="")
    return path


def read_csv(path) -> dict[str, np.ndarray]:
    """Columns of a run log keyed by header name.

    Raises:
        ValueError: the file is empty or has no data rows.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty CSV")
    header = [h.strip() for h in lines[0].split(",")]
    if len(lines) < 2:
        raise ValueError(f"{path}: CSV has a header but no data rows")
    data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    if data.shape[1] != len(header):
        raise ValueError(f"{path}: {data.shape[1]} values per row but {len(header)} header names")
    return {name: data[:, i] for i, name in enumerate(header)}


def indexed_columns(columns, prefix: str) -> list[str]:
    """Names ``prefix1, prefix2, ...`` present in ``columns``, in index order."""
    pat = re.compile(rf"^{re.escape(prefix)}(\d+)$")
    found = sorted((int(m.group(1)), c) for c in columns if (m := pat.match(c)))
    return [c for _, c in found]


def _finite_or_none(x):
    x = float(x)
    return x if math.isfinite(x) else None


def build_report(name: str, run: JointLog, metrics: dict[str, SignalMetrics] | None,
                 assumptions: AssumptionReport | None, settings: dict) -> dict:
    abort = None
    if run.aborted is not None:
        abort = {"time": run.aborted.t, "signal": run.aborted.signal, "reason": run.aborted.reason}
    metric_block = {}
    converged = None
    if metrics is not None:
        metric_block = {
            k: {"final_rms": _finite_or_none(m.final_rms), "max_abs": _finite_or_none(m.max_abs),
                "time_to_tolerance": _finite_or_none(m.time_to_tolerance)}
            for k, m in metrics.items()
        }
        converged = run.healthy and all(math.isfinite(m.time_to_tolerance) for m in metrics.values())
    assumption_block = None
    if assumptions is not None:
        assumption_block = {
            "phi_sup_norm": _finite_or_none(assumptions.phi_sup_norm),
            "bibs_integral_sup": _finite_or_none(assumptions.bibs_integral_sup),
            "phi_final_norm": _finite_or_none(assumptions.phi_final_norm),
            "frozen_max_real_part": (None if assumptions.frozen_max_real_part is None
                                     else _finite_or_none(assumptions.frozen_max_real_part)),
            "c1": assumptions.c1,
            "c2": assumptions.c2,
            "stable": assumptions.stable,
        }
    report = {
        "scenario": name,
        "settings": settings,
        "healthy": run.healthy,
        "abort": abort,
        "t_logged": float(run.times[-1]),
        "theta_true": run.plant.theta_true.tolist(),
        "theta_hat_final": None if run.theta_hat is None else [_finite_or_none(v) for v in run.theta_hat[-1]],
        "metrics": metric_block,
        "assumptions": assumption_block,
        "flags": {
            "healthy": run.healthy,
            "converged": converged,
            "assumptions_ok": None if assumptions is None else assumptions.stable,
        },
    }
    if run.frozen is not None:
        idx = np.flatnonzero(run.frozen)
        report["F_frozen_at"] = float(run.times[idx[0]]) if idx.size else None
    return report


def write_report(path, report: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    return path


def format_report(report: dict) -> str:
    out = [f"scenario: {report['scenario']}"]
    if report["abort"]:
        a = report["abort"]
        out.append(f"ABORTED at t={a['time']:.6g}: {a['signal']} {a['reason']}")
    else:
        out.append(f"run completed to t={report['t_logged']:.6g}")
    if report.get("F_frozen_at") is not None:
        out.append(f"gain matrix F frozen (||F|| > M) from t={report['F_frozen_at']:.6g}")
    if report["metrics"]:
        out.append(f"{'signal':<12}{'final RMS':>14}{'max |err|':>14}{'t_tol':>10}")
        for name, m in report["metrics"].items():
            ttt = "never" if m["time_to_tolerance"] is None else f"{m['time_to_tolerance']:.3f}"
            rms = "nan" if m["final_rms"] is None else f"{m['final_rms']:.4g}"
            mx = "nan" if m["max_abs"] is None else f"{m['max_abs']:.4g}"
            out.append(f"{name:<12}{rms:>14}{mx:>14}{ttt:>10}")
    a = report["assumptions"]
    if a:
        out.append(f"sup ||Phi(t)|| = {a['phi_sup_norm']:.4g} (c1 = {a['c1']:g})")
        out.append(f"sup BIBS integral = {a['bibs_integral_sup']:.4g} (c2 = {a['c2']:g})")
        out.append(f"assumption monitors: {'ok' if a['stable'] else 'VIOLATED'}")
    flags = report["flags"]
    out.append("flags: " + ", ".join(f"{k}={v}" for k, v in flags.items()))
    return "\n".join(out)
