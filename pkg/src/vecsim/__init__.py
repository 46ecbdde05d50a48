"""Discrete-event simulator of a MEC host that leases resources from parked vehicles."""

from vecsim.model import ResourceVector, GeoPoint, AreaOfInterest, Placement, LOCAL
from vecsim.kernel import Engine, LatencyModel, LinkParams, RngStreams
from vecsim.workload import ScenarioConfig
from vecsim.simulation import Simulation, run_scenario

__all__ = [
    "ResourceVector",
    "GeoPoint",
    "AreaOfInterest",
    "Placement",
    "LOCAL",
    "Engine",
    "LatencyModel",
    "LinkParams",
    "RngStreams",
    "ScenarioConfig",
    "Simulation",
    "run_scenario",
]
