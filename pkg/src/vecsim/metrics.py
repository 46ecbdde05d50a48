"""Run metrics, cross-seed aggregation and latency calibration."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from vecsim.kernel import ConfigError, LatencyModel, LinkParams, millis


@dataclass
class RunMetrics:
    join_times: dict[str, int] = field(default_factory=dict)
    release_times: dict[str, int] = field(default_factory=dict)
    allocation_delays: dict[str, int] = field(default_factory=dict)
    migrations_per_hour: list[int] = field(default_factory=lambda: [0] * 24)
    rejected_requests: int = 0
    service_gaps: dict[str, int] = field(default_factory=dict)
    occupancy: list[tuple[int, int]] = field(default_factory=list)
    service_losses: int = 0
    completed_requests: int = 0
    events_processed: int = 0
    messages_sent: int = 0
    migrations: list[dict] = field(default_factory=list)
    acquisition_sessions: list[dict] = field(default_factory=list)
    release_sessions: list[dict] = field(default_factory=list)
    requests: list[dict] = field(default_factory=list)

    @property
    def total_migrations(self) -> int:
        return sum(self.migrations_per_hour)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["occupancy"] = [list(p) for p in self.occupancy]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> RunMetrics:
        kwargs = {f.name: d[f.name] for f in fields(cls) if f.name in d}
        kwargs["occupancy"] = [tuple(p) for p in kwargs.get("occupancy", [])]
        return cls(**kwargs)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())
            fh.write("\n")

    @classmethod
    def load(cls, path) -> RunMetrics:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _stats(values: Sequence[float]) -> dict:
    if len(values) == 0:
        return {"mean": None, "std": None, "min": None, "max": None, "n": 0}
    a = np.asarray(values, dtype=float)
    return {
        "mean": float(a.mean()),
        "std": float(a.std()),
        "min": float(a.min()),
        "max": float(a.max()),
        "n": int(a.size),
    }


def aggregate(runs: Sequence[RunMetrics]) -> dict:
    """Per-metric statistics across runs.

    Sample metrics (join, release, allocation, gaps) pool their per-run means;
    hourly migration counts get per-hour mean/std and a 95% interval.
    """
    if not runs:
        raise ValueError("need at least one run")

    def run_means(getter):
        out = []
        for r in runs:
            vals = getter(r)
            if vals:
                out.append(math.fsum(vals) / len(vals))
        return sorted(out)

    # sorted per hour so float reductions do not depend on run order
    hourly = np.sort(np.array([r.migrations_per_hour for r in runs], dtype=float), axis=0)
    n = len(runs)
    per_hour_std = hourly.std(axis=0, ddof=1) if n > 1 else np.zeros(24)
    half = 1.96 * per_hour_std / math.sqrt(n)
    totals = sorted(float(r.total_migrations) for r in runs)
    return {
        "runs": n,
        "join_time_us": _stats(run_means(lambda r: list(r.join_times.values()))),
        "release_time_us": _stats(run_means(lambda r: list(r.release_times.values()))),
        "allocation_delay_us": _stats(run_means(lambda r: list(r.allocation_delays.values()))),
        "service_gap_us": _stats(run_means(lambda r: list(r.service_gaps.values()))),
        "rejected_requests": _stats(sorted(float(r.rejected_requests) for r in runs)),
        "total_migrations": _stats(totals),
        "migrations_per_hour": {
            "mean": [float(x) for x in hourly.mean(axis=0)],
            "std": [float(x) for x in per_hour_std],
            "ci95_low": [float(x) for x in hourly.mean(axis=0) - half],
            "ci95_high": [float(x) for x in hourly.mean(axis=0) + half],
        },
    }


# hops on the measured path of each protocol, see lifecycle module
JOIN_VEHICLE_HOPS = 3
JOIN_HOST_HOPS = 1
RELEASE_VEHICLE_HOPS = 1
RELEASE_HOST_HOPS = 1


def solve_link_bases(solo_join_ms: float, release_ms: float) -> tuple[int, int]:
    """Closed-form per-hop bases ``(vehicle_to_broker, broker_to_host)`` in microseconds.

    Join crosses the vehicle link three times and the broker-host link once
    before the VIM sees the vehicle; release crosses each once.
    """
    if solo_join_ms <= 0 or release_ms <= 0:
        raise ConfigError("calibration targets must be positive")
    # 3a + c = J ; a + c = R
    a = (solo_join_ms - release_ms) / (JOIN_VEHICLE_HOPS - RELEASE_VEHICLE_HOPS)
    c = release_ms - a
    if a < 0 or c < 0:
        raise ConfigError(
            f"infeasible targets join={solo_join_ms}ms release={release_ms}ms: per-hop latency would be negative"
        )
    return millis(a), millis(c)


def _fit_increment(measure, target_us: float, lo: float = 0.0, hi: float = 2_000.0, iters: int = 40) -> float:
    """Bisection on a queuing increment for a response that grows with it."""
    if measure(lo) >= target_us:
        return lo
    while measure(hi) < target_us:
        hi *= 2
        if hi > 1e7:
            raise ConfigError("could not bracket queuing increment")
    for _ in range(iters):
        mid = (lo + hi) / 2
        if measure(mid) < target_us:
            lo = mid
        else:
            hi = mid
    return round((lo + hi) / 2, 3)


@dataclass
class CalibrationTargets:
    solo_join_ms: float = 13.0
    release_ms: float = 7.0
    join_at_n_ms: float | None = 40.0
    join_n: int = 50
    alloc_ms: float | None = 40.0
    alloc_requests: int = 300
    alloc_cars: int = 50


def calibrate_latency(
    targets: CalibrationTargets | dict | None = None,
    template: LatencyModel | None = None,
    vehicle_queue_us: float = 0.0,
    ue_queue_us: float = 0.0,
) -> LatencyModel:
    """Fit link bases to the two timing anchors and, optionally, the queuing terms.

    Bases come from :func:`solve_link_bases`.  If ``join_at_n_ms`` is set the
    vehicle-link queuing increment is fitted by bisection so that the mean
    join time of ``join_n`` simultaneous arrivals hits it; likewise
    ``alloc_ms`` fits the UE-link increment against the mean allocation delay
    of ``alloc_requests`` simultaneous requests.  Fits run without jitter.
    Otherwise the given increments are kept.
    """
    from vecsim import experiments  # local import: experiments builds simulations

    if targets is None:
        targets = CalibrationTargets()
    elif isinstance(targets, dict):
        targets = CalibrationTargets(**targets)
    model = template or default_latency()
    a, c = solve_link_bases(targets.solo_join_ms, targets.release_ms)
    model = model.with_link("vehicle_to_broker", base_us=a, queue_us=vehicle_queue_us)
    model = model.with_link("broker_to_host", base_us=c, queue_us=0.0)
    model = model.with_link("ue_to_host", queue_us=ue_queue_us)

    if targets.join_at_n_ms is not None:
        flat = model.without_jitter()

        def join_mean(q):
            m = flat.with_link("vehicle_to_broker", queue_us=q)
            return experiments.join_release_once(targets.join_n, m, seed=0)[0]

        q = _fit_increment(join_mean, targets.join_at_n_ms * 1000)
        model = model.with_link("vehicle_to_broker", queue_us=q)

    if targets.alloc_ms is not None:
        flat = model.without_jitter()

        def alloc_mean(q):
            m = flat.with_link("ue_to_host", queue_us=q)
            return experiments.allocation_once(targets.alloc_requests, targets.alloc_cars, m, seed=0)

        q = _fit_increment(alloc_mean, targets.alloc_ms * 1000)
        model = model.with_link("ue_to_host", queue_us=q)
    return model


def default_latency() -> LatencyModel:
    """Uncalibrated starting point: millisecond-scale links with small jitter."""
    return LatencyModel(
        {
            "ue_to_host": LinkParams(2_000, 300, 0.0),
            "vehicle_to_broker": LinkParams(1_000, 300, 0.0),
            "broker_to_host": LinkParams(1_000, 200, 0.0),
            "host_internal": LinkParams(200, 50, 0.0),
            "system_level": LinkParams(1_000, 200, 0.0),
        }
    )
