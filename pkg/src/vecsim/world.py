"""Shared mutable state of one simulation instance."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

from vecsim.broker import Broker
from vecsim.kernel import US_PER_DAY, US_PER_HOUR, Engine, InvariantViolation, Network
from vecsim.metrics import RunMetrics
from vecsim.model import ZERO, AppInstance, AppState, FarEdgeNode, MecHost, VehicleState, fits

if TYPE_CHECKING:
    from vecsim.lifecycle import ResourceLifecycle
    from vecsim.mobility import MobilityService
    from vecsim.orchestration import Orchestrator, Vim


@dataclass
class World:
    engine: Engine
    net: Network
    broker: Broker
    hosts: dict[str, MecHost]
    metrics: RunMetrics = field(default_factory=RunMetrics)
    vehicles: dict[str, FarEdgeNode] = field(default_factory=dict)
    apps: dict[str, AppInstance] = field(default_factory=dict)
    # metrics ignore everything before this instant; hour 0 starts here
    measure_from: int = 0
    context_bytes: int = 1 << 20
    transfer_rate_bps: float = 100e6
    hard_cutoff_us: int | None = None
    vims: dict[str, Vim] = field(default_factory=dict)
    lifecycle: ResourceLifecycle | None = None
    ams: MobilityService | None = None
    orchestrator: Orchestrator | None = None
    rngs: Any = None
    _live_vehicles: dict = field(default_factory=dict, repr=False)
    _live_apps: dict = field(default_factory=dict, repr=False)
    _checked: dict = field(default_factory=dict, repr=False)
    _apps_epoch: int = field(default=-1, repr=False)

    @property
    def now(self) -> int:
        return self.engine.now

    def measuring(self, t: int | None = None) -> bool:
        return (self.engine.now if t is None else t) >= self.measure_from

    def hour_of(self, t: int) -> int:
        return ((t - self.measure_from) % US_PER_DAY) // US_PER_HOUR

    # -- invariants ------------------------------------------------------------

    def check_vehicle(self, v: FarEdgeNode) -> None:
        alloc = v.allocated
        if v.state is VehicleState.OUTSIDE or v.state is VehicleState.DEPARTED:
            if v.hosted_apps or alloc.cpu_units or alloc.ram_mb or alloc.storage_mb:
                raise InvariantViolation(f"vehicle {v.id} holds resources while {v.state.value}")
            if v.join_time is not None:
                raise InvariantViolation(f"vehicle {v.id} join_time inconsistent with state {v.state.value}")
            return
        if not fits(alloc, v.capacity):
            raise InvariantViolation(f"vehicle {v.id} over-committed: {alloc} > {v.capacity}")
        cpu = ram = disk = 0
        for app_id in v.hosted_apps:
            app = self.apps[app_id]
            if app.state is AppState.TERMINATED:
                raise InvariantViolation(f"vehicle {v.id} still hosts terminated app {app_id}")
            d = app.demand
            cpu += d.cpu_units
            ram += d.ram_mb
            disk += d.storage_mb
        if (cpu, ram, disk) != (alloc.cpu_units, alloc.ram_mb, alloc.storage_mb):
            raise InvariantViolation(f"vehicle {v.id} accounting drift: apps {(cpu, ram, disk)} != allocated {alloc}")
        if v.state is VehicleState.REWARD_PENDING:
            if v.hosted_apps or v.join_time is not None:
                raise InvariantViolation(f"vehicle {v.id} in use before joining")
        elif v.join_time is None:
            raise InvariantViolation(f"vehicle {v.id} join_time inconsistent with state {v.state.value}")

    def check_host(self, host: MecHost) -> None:
        if not fits(host.local_allocated, host.local_capacity):
            raise InvariantViolation(f"host {host.id} local VI over-committed")
        vim = self.vims[host.id]
        total = ZERO
        for demand in vim.local_reservations.values():
            total = total + demand
        if total != host.local_allocated:
            raise InvariantViolation(f"host {host.id} local accounting drift")

    def arrived(self, entity) -> None:
        """Put a vehicle or app under invariant checking once it enters the system."""
        if isinstance(entity, FarEdgeNode):
            self._live_vehicles[entity.id] = None
        else:
            self._live_apps[entity.id] = None

    def check_all(self, _event=None) -> None:
        """Full conservation check, cheap enough to run after every event.

        Only entities that have arrived are walked.  Departed vehicles and
        terminated apps get one final check and are then retired: nothing can
        hand them resources again, since placement goes through the host pool
        and every pool member must still be registered or departing.
        """
        live_v, live_a = self._live_vehicles, self._live_apps
        for host in self.hosts.values():
            self.check_host(host)
            for v in host.pool.values():
                if v.state not in (VehicleState.REGISTERED, VehicleState.DEPARTING):
                    raise InvariantViolation(f"pool of {host.id} holds {v.id} in state {v.state.value}")
        epoch = AppInstance.transitions
        checked = self._checked
        departed = False
        for vid in list(live_v):
            v = self.vehicles[vid]
            stamp = (v.state, v.allocated, len(v.hosted_apps), v.join_time, epoch)
            if checked.get(vid) != stamp:
                self.check_vehicle(v)
                checked[vid] = stamp
            if v.state is VehicleState.DEPARTED:
                del live_v[vid]
                checked.pop(vid, None)
                departed = True
        # app placements only change alongside a state transition
        if epoch == self._apps_epoch and not departed:
            return
        self._apps_epoch = epoch
        for aid in list(live_a):
            app = self.apps[aid]
            if app.state is AppState.TERMINATED:
                del live_a[aid]
            elif app.state is AppState.RUNNING and app.placement is not None and not app.placement.is_local:
                v = self.vehicles[app.placement.vehicle_id]
                if v.state is VehicleState.DEPARTED:
                    raise InvariantViolation(f"running app {app.id} references departed vehicle {v.id}")
