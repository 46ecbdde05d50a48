"""Domain vocabulary: resources, geometry, vehicles, hosts, applications, users."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import ClassVar


@dataclass(frozen=True, slots=True)
class ResourceVector:
    cpu_units: int = 0
    ram_mb: int = 0
    storage_mb: int = 0

    def __post_init__(self):
        if self.cpu_units < 0 or self.ram_mb < 0 or self.storage_mb < 0:
            raise ValueError(f"negative resource component: {self}")

    def __add__(self, other: ResourceVector) -> ResourceVector:
        return ResourceVector(
            self.cpu_units + other.cpu_units, self.ram_mb + other.ram_mb, self.storage_mb + other.storage_mb
        )

    def __sub__(self, other: ResourceVector) -> ResourceVector:
        return ResourceVector(
            self.cpu_units - other.cpu_units, self.ram_mb - other.ram_mb, self.storage_mb - other.storage_mb
        )

    def __le__(self, other: ResourceVector) -> bool:
        return fits(self, other)

    def is_zero(self) -> bool:
        return self.cpu_units == 0 and self.ram_mb == 0 and self.storage_mb == 0

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.cpu_units, self.ram_mb, self.storage_mb)

    @classmethod
    def of(cls, values) -> ResourceVector:
        if isinstance(values, ResourceVector):
            return values
        return cls(*(int(v) for v in values))


ZERO = ResourceVector()
# stands in for an unbounded local VI
UNBOUNDED = ResourceVector(10**12, 10**15, 10**15)


def fits(demand: ResourceVector, free: ResourceVector) -> bool:
    return (
        demand.cpu_units <= free.cpu_units
        and demand.ram_mb <= free.ram_mb
        and demand.storage_mb <= free.storage_mb
    )


@dataclass(frozen=True, slots=True)
class GeoPoint:
    x: float
    y: float

    def distance(self, other: GeoPoint) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True, slots=True)
class AreaOfInterest:
    center: GeoPoint
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("AoI radius must be positive")

    @classmethod
    def from_diameter(cls, center: GeoPoint, diameter: float) -> AreaOfInterest:
        return cls(center, diameter / 2)

    def contains(self, p: GeoPoint) -> bool:
        return contains(self, p)


def contains(aoi: AreaOfInterest, p: GeoPoint) -> bool:
    """Closed-disk membership; points on the boundary are inside."""
    dx = p.x - aoi.center.x
    dy = p.y - aoi.center.y
    return dx * dx + dy * dy <= aoi.radius * aoi.radius


@dataclass(frozen=True, slots=True)
class Placement:
    """Where an app runs: the host's local VI (``vehicle_id is None``) or a vehicle's VI."""

    vehicle_id: str | None = None

    @property
    def is_local(self) -> bool:
        return self.vehicle_id is None

    @classmethod
    def remote(cls, vehicle_id: str) -> Placement:
        return cls(vehicle_id)

    def __str__(self) -> str:
        return "local" if self.vehicle_id is None else f"remote:{self.vehicle_id}"


LOCAL = Placement(None)


class VehicleState(enum.Enum):
    OUTSIDE = "Outside"
    REWARD_PENDING = "RewardPending"
    REGISTERED = "Registered"
    DEPARTING = "Departing"
    DEPARTED = "Departed"


class AppState(enum.Enum):
    REQUESTED = "Requested"
    SCHEDULING = "Scheduling"
    INSTANTIATED = "Instantiated"
    RUNNING = "Running"
    MIGRATION_PENDING = "MigrationPending"
    CONTEXT_TRANSFERRING = "ContextTransferring"
    TERMINATED = "Terminated"


_A = AppState
APP_LIFECYCLE: dict[AppState, frozenset[AppState]] = {
    _A.REQUESTED: frozenset({_A.SCHEDULING, _A.TERMINATED}),
    _A.SCHEDULING: frozenset({_A.INSTANTIATED, _A.TERMINATED}),
    _A.INSTANTIATED: frozenset({_A.RUNNING, _A.TERMINATED}),
    _A.RUNNING: frozenset({_A.MIGRATION_PENDING, _A.TERMINATED}),
    _A.MIGRATION_PENDING: frozenset({_A.CONTEXT_TRANSFERRING, _A.TERMINATED}),
    _A.CONTEXT_TRANSFERRING: frozenset({_A.RUNNING, _A.TERMINATED}),
    _A.TERMINATED: frozenset(),
}


class InvalidTransition(RuntimeError):
    pass


@dataclass
class FarEdgeNode:
    """A parked vehicle offering its resources to the host pool.

    ``allocated`` is the VIM's view of what it has placed on the vehicle;
    ``vi_apps`` is what the vehicle's own VI agent has actually applied.
    """

    id: str
    location: GeoPoint
    capacity: ResourceVector
    endpoint: str = ""
    allocated: ResourceVector = ZERO
    state: VehicleState = VehicleState.OUTSIDE
    join_time: int | None = None
    hosted_apps: dict[str, None] = field(default_factory=dict)
    vi_apps: dict[str, ResourceVector] = field(default_factory=dict)
    reachable: bool = True
    host_id: str | None = None

    def __post_init__(self):
        if not self.endpoint:
            self.endpoint = f"vi://{self.id}"

    @property
    def free(self) -> ResourceVector:
        return self.capacity - self.allocated


@dataclass
class MecHost:
    id: str
    aoi: AreaOfInterest
    local_capacity: ResourceVector = UNBOUNDED
    local_allocated: ResourceVector = ZERO
    reward_offer: int = 10
    pool: dict[str, FarEdgeNode] = field(default_factory=dict)

    @property
    def local_free(self) -> ResourceVector:
        return self.local_capacity - self.local_allocated

    def aggregate_free(self) -> ResourceVector:
        total = self.local_free
        for v in self.pool.values():
            total = total + v.free
        return total

    def pool_capacity(self) -> ResourceVector:
        total = ZERO
        for v in self.pool.values():
            total = total + v.capacity
        return total


@dataclass
class AppInstance:
    id: str
    ue_id: str
    demand: ResourceVector
    placement: Placement | None = None
    state: AppState = AppState.REQUESTED
    context_size: int = 1 << 20
    created_at: int = 0
    terminated_at: int | None = None
    history: list[AppState] = field(default_factory=lambda: [AppState.REQUESTED])
    # process-wide count of state changes; lets invariant checks skip unchanged state
    transitions: ClassVar[int] = 0

    def transition(self, new: AppState) -> None:
        if new not in APP_LIFECYCLE[self.state]:
            raise InvalidTransition(f"app {self.id}: {self.state.value} -> {new.value}")
        self.state = new
        self.history.append(new)
        AppInstance.transitions += 1


@dataclass
class UserEquipment:
    id: str
    arrival_time: int
    session_duration: int
    app_id: str

    def __post_init__(self):
        if self.session_duration <= 0:
            raise ValueError("session duration must be positive")

    @property
    def session_end(self) -> int:
        return self.arrival_time + self.session_duration
