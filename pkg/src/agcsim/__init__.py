"""Multi-area AGC simulation with false-data-injection attacks and
attack-resilient deep-RL control, plus PID/LQR/MPC baselines."""

from .dynamics import (AreaParams, LfcModel, PlantInputs, TieTopology,
                       two_area_benchmark)
from .attacks import AttackSignal, InjectionPoint, MeasurementFrame
from .scenario import Scenario, parse_scenario, load_scenario
from .harness import Trajectory, Metrics, run_episode, compute_metrics, compare

__all__ = [
    "AreaParams", "LfcModel", "PlantInputs", "TieTopology",
    "two_area_benchmark", "AttackSignal", "InjectionPoint",
    "MeasurementFrame", "Scenario", "parse_scenario", "load_scenario",
    "Trajectory", "Metrics", "run_episode", "compute_metrics", "compare",
]
