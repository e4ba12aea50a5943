"""Simulation workbench for the GPEBO adaptive observer on LTV SISO plants."""

from .estimators import GradientConfig, LsFfConfig, excitation_scan
from .gpebo import ObserverConfig
from .observer import assumption_monitors, error_metrics, estimate_log, reconstruct_state
from .plant import DivergenceError, PlantSpec, simulate_plant
from .scenario import ScenarioError, load_scenario
from .simulation import JointLog, simulate
from .timefunc import ParseError, eval_expr, format_expr, parse_expr

__all__ = [
    "DivergenceError",
    "GradientConfig",
    "JointLog",
    "LsFfConfig",
    "ObserverConfig",
    "ParseError",
    "PlantSpec",
    "ScenarioError",
    "assumption_monitors",
    "error_metrics",
    "estimate_log",
    "eval_expr",
    "excitation_scan",
    "format_expr",
    "load_scenario",
    "parse_expr",
    "reconstruct_state",
    "simulate",
    "simulate_plant",
]
