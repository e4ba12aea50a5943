"""Static SVG line plots of a run log."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import indexed_columns, read_csv  # noqa: E402

__all__ = ["plot_csv", "MissingColumnsError"]

# fixed salt and no timestamp keep the SVG output reproducible
_RC = {"svg.hashsalt": "gpebo-lab", "svg.fonttype": "path"}


class MissingColumnsError(ValueError):
    pass


def _line_plot(path: Path, t, series: dict[str, np.ndarray], title: str, ylabel: str):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6.4, 3.6))
        for label, values in series.items():
            # a lone sample draws nothing as a line, so mark it
            ax.plot(t, values, label=label, linewidth=1.0, marker="o" if len(t) == 1 else None)
        ax.set_xlabel("time, s")
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.grid(True, linewidth=0.3)
        if len(series) > 1:
            ax.legend(fontsize="small", ncols=min(len(series), 3))
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def plot_csv(csv_path, out_dir=None) -> list[Path]:
    """Write ``1 + r + n`` SVG files next to the CSV (or into ``out_dir``).

    fig01 overlays every parameter estimate, then one figure per parameter
    error and one per state error.

    Raises:
        ValueError: empty CSV.
        MissingColumnsError: required columns are absent; all are named.
    """
    csv_path = Path(csv_path)
    cols = read_csv(csv_path)
    est = indexed_columns(cols, "thetahat")
    th_err = indexed_columns(cols, "thetaerr")
    x_err = indexed_columns(cols, "xerr")
    missing = [c for c in ("t",) if c not in cols]
    if not est:
        missing.append("thetahat1..")
    if not th_err:
        missing.append("thetaerr1..")
    if not x_err:
        missing.append("xerr1..")
    if len(th_err) != len(est):
        have = set(th_err)
        missing += [f"thetaerr{i + 1}" for i in range(len(est)) if f"thetaerr{i + 1}" not in have]
    if missing:
        raise MissingColumnsError(f"{csv_path}: missing columns: {', '.join(missing)}")

    out_dir = csv_path.parent if out_dir is None else Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = csv_path.stem
    t = cols["t"]
    written = []

    def emit(series, title, ylabel):
        path = out_dir / f"{stem}_fig{len(written) + 1:02d}.svg"
        _line_plot(path, t, series, title, ylabel)
        written.append(path)

    emit({c.replace("thetahat", "theta_hat"): cols[c] for c in est}, "parameter estimates", "estimate")
    for i, c in enumerate(th_err, start=1):
        emit({c: cols[c]}, f"parameter error {i}", f"theta_hat{i} - theta{i}")
    for i, c in enumerate(x_err, start=1):
        emit({c: cols[c]}, f"state error {i}", f"x_hat{i} - x{i}")
    return written
