"""Discrete-event simulator for opportunistic edge computing deployments."""

from .broker import Broker, DeploymentKind, SchedulingPolicy
from .config import ConfigError, ScenarioConfig, config_from_dict, load_config
from .harness import MetricsReport, compare_deployments, emit_csv, run_scenario
from .simulation import Simulation, run_request_lifecycle

__all__ = [
    "Broker",
    "ConfigError",
    "DeploymentKind",
    "MetricsReport",
    "ScenarioConfig",
    "SchedulingPolicy",
    "Simulation",
    "compare_deployments",
    "config_from_dict",
    "emit_csv",
    "load_config",
    "run_request_lifecycle",
    "run_scenario",
]

__version__ = "0.1.0"
