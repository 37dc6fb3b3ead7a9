"""Trace-driven simulation of cloud resource provisioning for consolidated
HTC and MTC workloads."""

from .elasticity import ElasticityPolicy, parse_policy
from .metrics import MetricsReport, TcoInputs, tco_dedicated, tco_leased
from .runtime import Simulation, simulate
from .scenarios import Scenario, load_scenario, run_scenario
from .trace import WorkloadKind, WorkloadTrace, load_trace

__version__ = "0.1.0"

__all__ = [
    "ElasticityPolicy", "MetricsReport", "Scenario", "Simulation", "TcoInputs", "WorkloadKind",
    "WorkloadTrace", "load_scenario", "load_trace", "parse_policy", "run_scenario", "simulate",
    "tco_dedicated", "tco_leased",
]
