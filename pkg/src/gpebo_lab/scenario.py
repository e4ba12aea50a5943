"""Scenario files: JSON documents describing one simulation study.

Time-varying entries are strings in the :mod:`gpebo_lab.timefunc` grammar;
plain numbers are accepted wherever an expression is. Unknown keys are
rejected everywhere.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .estimators import GradientConfig, LsFfConfig
from .gpebo import ObserverConfig
from .plant import PlantSpec
from .timefunc import TimeExpr, parse_expr

__all__ = ["Scenario", "ScenarioError", "load_scenario", "bundled_scenarios", "resolve_scenario_path"]

Expr = Union[str, float]
Positive = Annotated[float, Field(gt=0, allow_inf_nan=False)]


class ScenarioError(ValueError):
    """Scenario failed validation; the message names the offending field."""


def _to_expr(value: Expr) -> TimeExpr:
    if isinstance(value, str):
        return parse_expr(value)
    return TimeExpr.constant(value)


def _check_exprs(values):
    for v in values:
        _to_expr(v)
    return values


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PlantModel(_Strict):
    A: list[list[Expr]]
    C: list[Expr]
    k: list[float]
    b: list[float]
    x0: list[float]
    u: Expr = "0"
    noise_std: float = Field(0.0, ge=0, allow_inf_nan=False)
    noise_seed: int = 0

    @field_validator("A")
    @classmethod
    def _a_exprs(cls, rows):
        for row in rows:
            _check_exprs(row)
        return rows

    @field_validator("C")
    @classmethod
    def _c_exprs(cls, values):
        return _check_exprs(values)

    @field_validator("u")
    @classmethod
    def _u_expr(cls, value):
        _to_expr(value)
        return value

    @model_validator(mode="after")
    def _shapes(self):
        n = len(self.A)
        if n < 1:
            raise ValueError("A must have at least one row")
        for i, row in enumerate(self.A):
            if len(row) != n:
                raise ValueError(f"A row {i} has length {len(row)}, expected {n}")
        for name in ("C", "k", "b", "x0"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has length {len(getattr(self, name))}, expected n={n}")
        return self


class ObserverModel(_Strict):
    L: list[Expr]

    @field_validator("L")
    @classmethod
    def _l_exprs(cls, values):
        return _check_exprs(values)


class LsFfModel(_Strict):
    kind: Literal["lsff"]
    gamma: Positive
    beta: float = Field(ge=0, allow_inf_nan=False)
    f0: Positive
    M: Positive
    theta0: Optional[list[float]] = None


class GradientModel(_Strict):
    kind: Literal["gradient"]
    gamma: Positive
    normalized: bool = False
    theta0: Optional[list[float]] = None


EstimatorModel = Annotated[Union[LsFfModel, GradientModel], Field(discriminator="kind")]


class SimModel(_Strict):
    dt: Positive = 1e-3
    t_final: Positive
    log_interval: Optional[Positive] = None

    @model_validator(mode="after")
    def _grid(self):
        steps = self.t_final / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError(f"t_final={self.t_final} is not a whole number of steps dt={self.dt}")
        if self.log_interval is not None:
            ratio = self.log_interval / self.dt
            if ratio < 1 - 1e-9 or abs(ratio - round(ratio)) > 1e-9 * ratio:
                raise ValueError(f"log_interval={self.log_interval} is not a whole multiple of dt={self.dt}")
            if round(steps) % round(ratio):
                raise ValueError("log_interval must divide t_final")
        return self

    @property
    def log_every(self) -> int:
        if self.log_interval is None:
            return 1
        return int(round(self.log_interval / self.dt))


class MonitorsModel(_Strict):
    c1: Positive = 100.0
    c2: Positive = 100.0
    rel_tol: Positive = 0.05
    dt: Positive = 1e-3


class OutputsModel(_Strict):
    csv: Optional[str] = None
    plots: bool = False
    report: Optional[str] = None


class Scenario(_Strict):
    name: str = Field(min_length=1)
    plant: PlantModel
    observer: ObserverModel
    estimator: Optional[EstimatorModel] = None
    sim: SimModel
    monitors: MonitorsModel = MonitorsModel()
    outputs: OutputsModel = OutputsModel()

    @model_validator(mode="after")
    def _cross_shapes(self):
        n = len(self.plant.A)
        if len(self.observer.L) != n:
            raise ValueError(f"observer.L has length {len(self.observer.L)}, expected n={n}")
        if self.estimator is not None and self.estimator.theta0 is not None:
            if len(self.estimator.theta0) != 3 * n:
                raise ValueError(f"estimator.theta0 has length {len(self.estimator.theta0)}, expected 3n={3 * n}")
        return self

    @property
    def n(self) -> int:
        return len(self.plant.A)

    def plant_spec(self) -> PlantSpec:
        p = self.plant
        return PlantSpec(
            A=[[_to_expr(v) for v in row] for row in p.A],
            C=[_to_expr(v) for v in p.C],
            k=p.k, b=p.b, x0=p.x0, u=_to_expr(p.u),
        )

    def observer_config(self) -> ObserverConfig:
        return ObserverConfig(tuple(_to_expr(v) for v in self.observer.L))

    def estimator_config(self):
        e = self.estimator
        if e is None:
            return None
        if isinstance(e, LsFfModel):
            return LsFfConfig(gamma=e.gamma, beta=e.beta, f0=e.f0, M=e.M, theta0=e.theta0)
        return GradientConfig(gamma=e.gamma, normalized=e.normalized, theta0=e.theta0)

    def csv_name(self) -> str:
        return self.outputs.csv or f"{self.name}.csv"

    def report_name(self) -> str:
        return self.outputs.report or f"{self.name}_report.json"


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        msg = err["msg"]
        if msg.startswith("Value error, "):
            msg = msg[len("Value error, "):]
        lines.append(f"{loc}: {msg}")
    return "; ".join(lines)


def bundled_scenarios() -> list[str]:
    root = resources.files("gpebo_lab") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_scenario_path(name_or_path) -> Path:
    """A file path, or the name of a bundled scenario such as ``paper_example``."""
    path = Path(name_or_path)
    if path.exists():
        return path
    stem = path.name[:-5] if path.name.endswith(".json") else path.name
    if str(path) in (stem, stem + ".json") and stem in bundled_scenarios():
        return Path(str(resources.files("gpebo_lab") / "scenarios" / f"{stem}.json"))
    raise ScenarioError(f"scenario file not found: {name_or_path}")


def load_scenario(source, *, dt: float | None = None, t_final: float | None = None) -> Scenario:
    """Load and validate a scenario from a path, bundled name or dict.

    ``dt`` and ``t_final`` override the ``sim`` block before validation.

    Raises:
        ScenarioError: unreadable file, malformed JSON or failed validation.
    """
    if isinstance(source, dict):
        data = json.loads(json.dumps(source))
    else:
        path = resolve_scenario_path(source)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: invalid JSON: {exc}") from exc
        except OSError as exc:
            raise ScenarioError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    sim = data.get("sim")
    if isinstance(sim, dict):
        if dt is not None:
            sim["dt"] = dt
        if t_final is not None:
            sim["t_final"] = t_final
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        raise ScenarioError(_format_errors(exc)) from None
