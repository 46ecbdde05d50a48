"""Experiment harnesses behind the protocol-timing, allocation and scheduler studies."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Sequence

import numpy as np

from vecsim.kernel import LatencyModel, seconds
from vecsim.metrics import RunMetrics
from vecsim.model import AreaOfInterest, FarEdgeNode, GeoPoint, MecHost, ResourceVector
from vecsim.simulation import Simulation, build_world, finalize
from vecsim.workload import ScenarioConfig

LOT = AreaOfInterest(GeoPoint(0, 0), 500.0)


def _parked(n: int, rng: np.random.Generator, capacity: ResourceVector) -> list[FarEdgeNode]:
    out = []
    for i in range(1, n + 1):
        r = 150 * math.sqrt(rng.random())
        th = 2 * math.pi * rng.random()
        out.append(FarEdgeNode(f"veh-{i:06d}", GeoPoint(r * math.cos(th), r * math.sin(th)), capacity))
    return out


def join_release_once(n_vehicles: int, latency: LatencyModel, seed: int = 0, *, full_checks: bool = False):
    """``n_vehicles`` arrive together, then all leave together ten seconds later.

    Returns ``(mean_join_us, mean_release_us, metrics)``.
    """
    w = build_world(latency, seed, hosts=[MecHost("mech-1", LOT)], full_checks=full_checks)
    for v in _parked(n_vehicles, w.rngs["placement"], ResourceVector(4, 2048, 1000)):
        w.vehicles[v.id] = v
        w.lifecycle.vehicle_join(v, at=0)
        w.lifecycle.vehicle_leave(v.id, at=seconds(10))
    w.engine.run()
    m = finalize(w)
    joins = list(m.join_times.values())
    releases = list(m.release_times.values())
    return float(np.mean(joins)), float(np.mean(releases)), m


def allocation_once(n_requests: int, n_cars: int, latency: LatencyModel, seed: int = 0,
                    *, full_checks: bool = False, return_metrics: bool = False):
    """``n_cars`` join first; ``n_requests`` UEs then ask for an app at the same instant.

    Vehicles are sized so every app lands remotely under round-robin.
    Returns the mean allocation delay in microseconds.
    """
    per_car = -(-n_requests // max(n_cars, 1)) + 1
    cap = ResourceVector(per_car, 256 * per_car, 100 * per_car)
    w = build_world(latency, seed, hosts=[MecHost("mech-1", LOT)], scheduler="round-robin", full_checks=full_checks)
    for v in _parked(n_cars, w.rngs["placement"], cap):
        w.vehicles[v.id] = v
        w.lifecycle.vehicle_join(v, at=0)
    t0 = seconds(5)
    for i in range(1, n_requests + 1):
        w.orchestrator.request_app(f"ue-{i:06d}", ResourceVector(1, 256, 100), at=t0, app_id=f"app-{i:06d}")
    w.engine.run()
    m = finalize(w)
    mean = float(np.mean(list(m.allocation_delays.values())))
    return (mean, m) if return_metrics else mean


def _run_cfg(args) -> RunMetrics:
    cfg, full_checks = args
    return Simulation(cfg, full_checks=full_checks).run()


def run_many(configs: Sequence[ScenarioConfig], workers: int | None = None, full_checks: bool = False) -> list[RunMetrics]:
    """Run independent scenarios, in parallel when ``workers`` allows; output order follows input order."""
    jobs = [(c, full_checks) for c in configs]
    if workers is None:
        workers = min(len(jobs), os.cpu_count() or 1)
    if workers <= 1 or len(jobs) <= 1:
        return [_run_cfg(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_run_cfg, jobs))


def compare_schedulers(config: ScenarioConfig, schedulers: Sequence[str], seeds: Sequence[int],
                       workers: int | None = None, full_checks: bool = False) -> dict[str, list[RunMetrics]]:
    grid = [(s, seed) for s in schedulers for seed in seeds]
    runs = run_many([config.replace(scheduler=s, seed=seed) for s, seed in grid], workers, full_checks)
    out: dict[str, list[RunMetrics]] = {s: [] for s in schedulers}
    for (s, _), m in zip(grid, runs):
        out[s].append(m)
    return out
