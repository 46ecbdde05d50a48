"""Placement policies over a pool snapshot and the parking-residency predictor."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Protocol, Sequence

from vecsim.kernel import US_PER_DAY, US_PER_S
from vecsim.model import GeoPoint, Placement, ResourceVector, fits

log = logging.getLogger(__name__)

DAY_S = 86_400


@dataclass(frozen=True)
class VehicleSlot:
    id: str
    free: ResourceVector
    join_time: int
    location: GeoPoint | None = None


@dataclass(frozen=True)
class PoolSnapshot:
    """Immutable view of the pool; ``vehicles`` is in pool-insertion order."""

    vehicles: tuple[VehicleSlot, ...]
    local_free: ResourceVector
    snapshot_time: int = 0


class Scheduler(Protocol):
    name: str

    def decide(self, snapshot: PoolSnapshot, demand: ResourceVector, now: int) -> Placement | None: ...


# -- residency model ---------------------------------------------------------


@dataclass(frozen=True)
class ResidencyBin:
    mean_s: float
    std_s: float
    n: int


@dataclass
class ResidencyModel:
    """Per-bin Gaussian statistics of how long a vehicle stays parked, keyed by entry time of day."""

    bin_minutes: int
    bins: list[ResidencyBin]

    def __post_init__(self):
        if self.bin_minutes <= 0 or (24 * 60) % self.bin_minutes:
            raise ValueError("bin width must divide a day")
        if len(self.bins) != 24 * 60 // self.bin_minutes:
            raise ValueError(f"expected {24 * 60 // self.bin_minutes} bins, got {len(self.bins)}")

    @property
    def bin_us(self) -> int:
        return self.bin_minutes * 60 * US_PER_S

    def bin_of(self, t_us: int) -> int:
        return (t_us % US_PER_DAY) // self.bin_us

    def mean_at(self, t_us: int) -> float:
        return self.bins[self.bin_of(t_us)].mean_s

    def std_at(self, t_us: int) -> float:
        return self.bins[self.bin_of(t_us)].std_s

    def global_mean(self) -> float:
        n = sum(b.n for b in self.bins)
        if n == 0:
            return sum(b.mean_s for b in self.bins) / len(self.bins)
        return sum(b.mean_s * b.n for b in self.bins) / n

    def scaled(self, factor: float) -> ResidencyModel:
        return ResidencyModel(self.bin_minutes, [ResidencyBin(b.mean_s * factor, b.std_s * factor, b.n) for b in self.bins])

    def to_dict(self) -> dict:
        return {
            "bin_minutes": self.bin_minutes,
            "bins": [{"mean_s": b.mean_s, "std_s": b.std_s, "n": b.n} for b in self.bins],
        }

    @classmethod
    def from_dict(cls, d: dict) -> ResidencyModel:
        return cls(int(d["bin_minutes"]), [ResidencyBin(float(b["mean_s"]), float(b["std_s"]), int(b["n"])) for b in d["bins"]])

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> ResidencyModel:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def build_residency_model(
    rows: Iterable[tuple[datetime, datetime]], bin_minutes: int = 10
) -> tuple[ResidencyModel, int]:
    """Group stays by entry-time bin and return ``(model, skipped_rows)``.

    Standard deviations are population (ddof=0).  Bins without samples carry
    the trace-wide mean and a zero count.
    """
    nbins = 24 * 60 // bin_minutes
    sums = [0.0] * nbins
    sq = [0.0] * nbins
    counts = [0] * nbins
    skipped = 0
    for row in rows:
        try:
            entry, exit_ = row
            stay = (exit_ - entry).total_seconds()
            if stay < 0:
                raise ValueError("exit before entry")
            minute = entry.hour * 60 + entry.minute
        except (TypeError, ValueError, AttributeError):
            skipped += 1
            continue
        b = minute // bin_minutes
        sums[b] += stay
        sq[b] += stay * stay
        counts[b] += 1
    total_n = sum(counts)
    global_mean = sum(sums) / total_n if total_n else 0.0
    bins = []
    for s, s2, n in zip(sums, sq, counts):
        if n == 0:
            bins.append(ResidencyBin(global_mean, 0.0, 0))
            continue
        mean = s / n
        var = max(0.0, s2 / n - mean * mean)
        bins.append(ResidencyBin(mean, math.sqrt(var), n))
    if skipped:
        log.info("skipped %d malformed parking rows", skipped)
    return ResidencyModel(bin_minutes, bins), skipped


def predict_remaining(model: ResidencyModel, join_time: int, now: int) -> int:
    """Expected remaining stay in microseconds, clamped at zero for overdue vehicles."""
    if now < join_time:
        raise ValueError("now precedes join time")
    expected = int(round(model.mean_at(join_time) * US_PER_S))
    return max(0, expected - (now - join_time))


# -- policies ------------------------------------------------------------------


def best_first(snapshot: PoolSnapshot, demand: ResourceVector) -> Placement | None:
    for v in snapshot.vehicles:
        if fits(demand, v.free):
            return Placement.remote(v.id)
    return None


class BestFirst:
    name = "best-first"

    def decide(self, snapshot: PoolSnapshot, demand: ResourceVector, now: int) -> Placement | None:
        return best_first(snapshot, demand)


class RoundRobin:
    """Cycles through the pool in insertion order, skipping vehicles that do not fit.

    The cursor remembers the last vehicle chosen; if that vehicle has since
    left the pool, the scan resumes after the position it used to occupy.
    """

    name = "round-robin"

    def __init__(self) -> None:
        self.last_id: str | None = None
        self.last_index = -1

    def decide(self, snapshot: PoolSnapshot, demand: ResourceVector, now: int) -> Placement | None:
        vehicles = snapshot.vehicles
        n = len(vehicles)
        if n == 0:
            return None
        start = 0
        if self.last_id is not None:
            idx = next((i for i, v in enumerate(vehicles) if v.id == self.last_id), None)
            start = idx + 1 if idx is not None else self.last_index
        for k in range(n):
            i = (start + k) % n
            if fits(demand, vehicles[i].free):
                self.last_id = vehicles[i].id
                self.last_index = i
                return Placement.remote(vehicles[i].id)
        return None


def round_robin(snapshot: PoolSnapshot, demand: ResourceVector, state: RoundRobin | None = None) -> Placement | None:
    return (state or RoundRobin()).decide(snapshot, demand, snapshot.snapshot_time)


def residency_choice(
    snapshot: PoolSnapshot, demand: ResourceVector, now: int, model: ResidencyModel
) -> Placement | None:
    best_key = None
    best_id = None
    for v in snapshot.vehicles:
        if not fits(demand, v.free):
            continue
        key = (-predict_remaining(model, v.join_time, now), v.join_time, v.id)
        if best_key is None or key < best_key:
            best_key, best_id = key, v.id
    return None if best_id is None else Placement.remote(best_id)


class ResidencyPredictive:
    """Places on the fitting vehicle with the longest predicted remaining stay."""

    name = "residency"

    def __init__(self, model: ResidencyModel, clock_offset: int = 0) -> None:
        self.model = model
        # simulation time + clock_offset = time since a midnight
        self.clock_offset = clock_offset

    def decide(self, snapshot: PoolSnapshot, demand: ResourceVector, now: int) -> Placement | None:
        if self.clock_offset:
            snapshot = PoolSnapshot(
                tuple(VehicleSlot(v.id, v.free, v.join_time + self.clock_offset, v.location) for v in snapshot.vehicles),
                snapshot.local_free,
                snapshot.snapshot_time + self.clock_offset,
            )
            now += self.clock_offset
        return residency_choice(snapshot, demand, now, self.model)


SCHEDULER_NAMES = ("best-first", "round-robin", "residency")


def make_scheduler(name: str, residency: ResidencyModel | None = None, clock_offset: int = 0) -> Scheduler:
    if name == "best-first":
        return BestFirst()
    if name == "round-robin":
        return RoundRobin()
    if name in ("residency", "residency-predictive", "custom"):
        if residency is None:
            raise ValueError("residency scheduler needs a residency model")
        return ResidencyPredictive(residency, clock_offset)
    raise ValueError(f"unknown scheduler {name!r}; choose from {', '.join(SCHEDULER_NAMES)}")
