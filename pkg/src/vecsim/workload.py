"""Scenario inputs: hourly activity profiles, arrival generators, trace ingestion, config."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Iterator, Sequence

import numpy as np

from vecsim.kernel import US_PER_DAY, US_PER_HOUR, US_PER_S, ConfigError
from vecsim.model import ResourceVector
from vecsim.scheduling import ResidencyModel, build_residency_model

log = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent / "data"
MIN_RESIDENCY_S = 60.0


@dataclass(frozen=True)
class HourlyProfile:
    """Twenty-four non-negative event rates, one per hour of the day (events/hour)."""

    rates: tuple[float, ...]

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        if len(rates) != 24:
            raise ValueError(f"hourly profile needs 24 rates, got {len(rates)}")
        if any(r < 0 or r != r for r in rates):
            raise ValueError("hourly rates must be non-negative")
        object.__setattr__(self, "rates", rates)

    def scaled(self, factor: float) -> HourlyProfile:
        return HourlyProfile(tuple(r * factor for r in self.rates))

    @classmethod
    def constant(cls, rate: float) -> HourlyProfile:
        return cls((rate,) * 24)

    def to_list(self) -> list[float]:
        return list(self.rates)


# -- sampled distributions -------------------------------------------------------


@dataclass
class VectorChoice:
    """Discrete distribution over resource vectors."""

    choices: list[tuple[int, int, int]]
    weights: list[float] | None = None

    def sample(self, rng: np.random.Generator) -> ResourceVector:
        if len(self.choices) == 1:
            return ResourceVector.of(self.choices[0])
        p = None
        if self.weights:
            w = np.asarray(self.weights, dtype=float)
            p = w / w.sum()
        i = int(rng.choice(len(self.choices), p=p))
        return ResourceVector.of(self.choices[i])

    def to_dict(self) -> dict:
        return {"choices": [list(c) for c in self.choices], "weights": self.weights}

    @classmethod
    def from_dict(cls, d) -> VectorChoice:
        if isinstance(d, (list, tuple)) and d and not isinstance(d[0], (list, tuple)):
            return cls([tuple(int(x) for x in d)])
        return cls([tuple(int(x) for x in c) for c in d["choices"]], d.get("weights"))


@dataclass
class DurationDist:
    """Session length: ``gaussian`` (truncated below at ``min_s``) or ``exponential``."""

    kind: str = "gaussian"
    mean_s: float = 3600.0
    std_s: float = 1800.0
    min_s: float = MIN_RESIDENCY_S

    def sample_s(self, rng: np.random.Generator) -> float:
        if self.kind == "exponential":
            return max(self.min_s, float(rng.exponential(self.mean_s)))
        if self.kind == "gaussian":
            return truncated_gaussian(rng, self.mean_s, self.std_s, self.min_s)
        if self.kind == "fixed":
            return max(self.min_s, self.mean_s)
        raise ConfigError(f"unknown duration distribution {self.kind!r}")


def truncated_gaussian(rng: np.random.Generator, mean: float, std: float, minimum: float, tries: int = 64) -> float:
    """Draw N(mean, std) conditioned on ``>= minimum`` by rejection; clamps if rejection keeps failing."""
    if std <= 0:
        return max(minimum, mean)
    for _ in range(tries):
        x = float(rng.normal(mean, std))
        if x >= minimum:
            return x
    return minimum


# -- generators ------------------------------------------------------------------


@dataclass(frozen=True)
class VehicleArrival:
    arrival: int
    residency: int
    capacity: ResourceVector


@dataclass(frozen=True)
class UserArrival:
    arrival: int
    session: int
    demand: ResourceVector


def poisson_arrivals(profile: HourlyProfile, rng: np.random.Generator, horizon: int, start: int = 0) -> list[int]:
    """Piecewise-homogeneous Poisson arrival times in ``[0, horizon)``.

    Time-of-day at simulation time ``t`` is ``(t + start) mod 24h``; the rate is
    constant within each wall-clock hour.
    """
    times: list[int] = []
    t = 0
    while t < horizon:
        tod = (t + start) % US_PER_DAY
        hour = tod // US_PER_HOUR
        seg_end = min(horizon, t + (US_PER_HOUR - tod % US_PER_HOUR))
        length = seg_end - t
        lam = profile.rates[hour] * length / US_PER_HOUR
        n = int(rng.poisson(lam)) if lam > 0 else 0
        if n:
            times.extend(sorted(int(x) for x in rng.integers(t, seg_end, size=n)))
        t = seg_end
    return times


def gen_vehicle_process(
    profile: HourlyProfile,
    residency: ResidencyModel,
    rng: np.random.Generator,
    horizon: int = US_PER_DAY,
    start: int = 0,
    capacity: VectorChoice | None = None,
    min_residency_s: float = MIN_RESIDENCY_S,
) -> Iterator[VehicleArrival]:
    capacity = capacity or VectorChoice([(4, 2048, 1000)])
    for t in poisson_arrivals(profile, rng, horizon, start):
        tod = t + start
        stay_s = truncated_gaussian(rng, residency.mean_at(tod), residency.std_at(tod), min_residency_s)
        yield VehicleArrival(t, int(round(stay_s * US_PER_S)), capacity.sample(rng))


def gen_user_process(
    profile: HourlyProfile,
    session: DurationDist,
    rng: np.random.Generator,
    horizon: int = US_PER_DAY,
    start: int = 0,
    demand: VectorChoice | None = None,
) -> Iterator[UserArrival]:
    demand = demand or VectorChoice([(1, 256, 100)])
    for t in poisson_arrivals(profile, rng, horizon, start):
        yield UserArrival(t, int(round(session.sample_s(rng) * US_PER_S)), demand.sample(rng))


# -- traces ----------------------------------------------------------------------


class TraceError(ValueError):
    pass


@dataclass
class ParkingTrace:
    rows: list[tuple[datetime, datetime]]
    malformed: int = 0

    def __len__(self) -> int:
        return len(self.rows)


def ingest_parking_csv(path) -> ParkingTrace:
    """Read ``entry_time,exit_time`` rows (ISO-8601); bad rows are skipped and counted."""
    try:
        fh = open(path, newline="")
    except OSError as e:
        raise TraceError(f"cannot read parking trace {path}: {e}") from e
    rows, bad = [], 0
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"entry_time", "exit_time"} <= set(reader.fieldnames):
            raise TraceError(f"{path}: expected header entry_time,exit_time")
        for rec in reader:
            try:
                entry = datetime.fromisoformat(rec["entry_time"].strip())
                exit_ = datetime.fromisoformat(rec["exit_time"].strip())
            except (AttributeError, ValueError, TypeError):
                bad += 1
                continue
            if exit_ < entry:
                bad += 1
                continue
            rows.append((entry, exit_))
    total = len(rows) + bad
    if total and bad / total > 0.5:
        raise TraceError(f"{path}: {bad} of {total} rows malformed; wrong file?")
    if bad:
        log.warning("%s: skipped %d malformed rows", path, bad)
    return ParkingTrace(rows, bad)


def write_parking_csv(rows: Sequence[tuple[datetime, datetime]], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["entry_time", "exit_time"])
        for entry, exit_ in rows:
            w.writerow([entry.isoformat(timespec="seconds"), exit_.isoformat(timespec="seconds")])


def derive_profiles(trace: ParkingTrace, bin_minutes: int = 10) -> tuple[HourlyProfile, ResidencyModel]:
    """Hourly arrival rate averaged over the days the trace spans, plus the residency model."""
    if not trace.rows:
        raise TraceError("empty parking trace")
    counts = [0] * 24
    days = {entry.date() for entry, _ in trace.rows}
    first, last = min(days), max(days)
    ndays = (last - first).days + 1
    for entry, _ in trace.rows:
        counts[entry.hour] += 1
    model, _ = build_residency_model(trace.rows, bin_minutes)
    return HourlyProfile(tuple(c / ndays for c in counts)), model


def ingest_user_csv(path) -> HourlyProfile:
    """Read ``hour,avg_sessions`` rows into a profile; missing hours are zero."""
    rates = [0.0] * 24
    try:
        fh = open(path, newline="")
    except OSError as e:
        raise TraceError(f"cannot read user activity file {path}: {e}") from e
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"hour", "avg_sessions"} <= set(reader.fieldnames):
            raise TraceError(f"{path}: expected header hour,avg_sessions")
        for rec in reader:
            try:
                h = int(rec["hour"])
                v = float(rec["avg_sessions"])
            except (TypeError, ValueError) as e:
                raise TraceError(f"{path}: bad row {rec}") from e
            if not 0 <= h < 24 or v < 0:
                raise TraceError(f"{path}: bad row {rec}")
            rates[h] = v
    return HourlyProfile(tuple(rates))


def synth_parking_rows(
    profile: HourlyProfile, residency: ResidencyModel, days: int, seed: int = 0,
    start_date: datetime = datetime(2023, 1, 2),
) -> list[tuple[datetime, datetime]]:
    """Synthetic garage transactions drawn from the same processes the simulator uses."""
    rng = np.random.default_rng(seed)
    rows = []
    for va in gen_vehicle_process(profile, residency, rng, horizon=days * US_PER_DAY):
        entry = start_date + timedelta(microseconds=va.arrival)
        entry = entry.replace(microsecond=0)
        rows.append((entry, entry + timedelta(seconds=round(va.residency / US_PER_S))))
    return rows


# -- scenario configuration -------------------------------------------------------


@dataclass
class ScenarioConfig:
    """Everything one run needs.  Serializes to JSON and back without loss.

    Profile and residency entries are either inline values or file paths;
    relative paths resolve against ``base_dir`` (the config file's directory).
    """

    name: str = "demo"
    seed: int = 0
    horizon_s: float = 86_400.0
    warmup_s: float = 43_200.0
    latency: dict = field(default_factory=dict)
    aoi_center: tuple[float, float] = (0.0, 0.0)
    aoi_radius: float = 500.0
    lot_center: tuple[float, float] = (0.0, 0.0)
    lot_radius: float = 150.0
    reward_offer: int = 10
    hosts: int = 1
    vehicle_capacity: Any = field(default_factory=lambda: {"choices": [[4, 2048, 1000]]})
    app_demand: Any = field(default_factory=lambda: {"choices": [[1, 256, 100]]})
    session: dict = field(default_factory=lambda: {"kind": "gaussian", "mean_s": 3600.0, "std_s": 1800.0, "min_s": 60.0})
    vehicle_profile: Any = "parking_profile.json"
    residency_model: Any = "parking_profile.json"
    user_profile: Any = "user_activity.csv"
    user_rate_scale: float = 1.0
    scheduler: str = "round-robin"
    context_bytes: int = 1 << 20
    transfer_rate_bps: float = 100e6
    local_capacity: Any = None
    hard_cutoff_s: float | None = None
    min_residency_s: float = MIN_RESIDENCY_S
    base_dir: str | None = None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["aoi_center"] = list(self.aoi_center)
        d["lot_center"] = list(self.lot_center)
        d.pop("base_dir")
        return d

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | None = None) -> ScenarioConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        kw = dict(d)
        for k in ("aoi_center", "lot_center"):
            if k in kw:
                kw[k] = tuple(float(x) for x in kw[k])
        cfg = cls(**kw)
        if base_dir is not None:
            cfg.base_dir = str(base_dir)
        return cfg

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps() + "\n")

    @classmethod
    def load(cls, path) -> ScenarioConfig:
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot load config {path}: {e}") from e
        return cls.from_dict(d, base_dir=str(path.parent))

    def replace(self, **changes) -> ScenarioConfig:
        return dataclasses.replace(self, **changes)

    def set_key(self, key: str, value) -> ScenarioConfig:
        """Copy with a dotted key overridden, e.g. ``session.mean_s`` or ``user_rate_scale``."""
        d = self.to_dict()
        parts = key.split(".")
        cur = d
        for p in parts[:-1]:
            if not isinstance(cur.get(p), dict):
                raise ConfigError(f"cannot set {key}: {p} is not a mapping")
            cur = cur[p]
        if parts[-1] not in cur and len(parts) == 1:
            raise ConfigError(f"unknown config key {key!r}")
        cur[parts[-1]] = value
        return ScenarioConfig.from_dict(d, self.base_dir)

    # -- resolution --------------------------------------------------------------

    def _resolve(self, ref) -> Path:
        p = Path(ref)
        if p.is_absolute() and p.exists():
            return p
        for base in ([Path(self.base_dir)] if self.base_dir else []) + [DATA_DIR]:
            if (base / p).exists():
                return base / p
        raise ConfigError(f"cannot find referenced file {ref!r}")

    def load_vehicle_profile(self) -> HourlyProfile:
        ref = self.vehicle_profile
        if isinstance(ref, (list, tuple)):
            return HourlyProfile(tuple(ref))
        path = self._resolve(ref)
        if path.suffix == ".csv":
            return ingest_user_csv(path)
        return HourlyProfile(tuple(json.loads(path.read_text())["vehicle_rates"]))

    def load_residency(self) -> ResidencyModel:
        ref = self.residency_model
        if isinstance(ref, dict):
            return ResidencyModel.from_dict(ref.get("residency", ref))
        d = json.loads(self._resolve(ref).read_text())
        return ResidencyModel.from_dict(d.get("residency", d))

    def load_user_profile(self) -> HourlyProfile:
        ref = self.user_profile
        if isinstance(ref, (list, tuple)):
            prof = HourlyProfile(tuple(ref))
        else:
            path = self._resolve(ref)
            if path.suffix == ".csv":
                prof = ingest_user_csv(path)
            else:
                d = json.loads(path.read_text())
                prof = HourlyProfile(tuple(d["user_rates"] if "user_rates" in d else d["rates"]))
        return prof.scaled(self.user_rate_scale)

    def session_dist(self) -> DurationDist:
        return DurationDist(**self.session)

    def capacity_dist(self) -> VectorChoice:
        return VectorChoice.from_dict(self.vehicle_capacity)

    def demand_dist(self) -> VectorChoice:
        return VectorChoice.from_dict(self.app_demand)


def bundled_config(name: str = "demo.json") -> ScenarioConfig:
    return ScenarioConfig.load(DATA_DIR / name)
