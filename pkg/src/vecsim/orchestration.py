"""Instantiation flow from the device app to the VIM, and the VIM itself.

Request chain, each hop a message::

    (1) AppRequest     device app -> UALCMP   ue_to_host, request
    (2) Forward        UALCMP     -> MEC-O    system_level
    (3) Discovery      MEC-O      -> MEC-Hs   system_level
    (4) DiscoveryReply MEC-H      -> MEC-O    system_level
    (5) Instantiate    MEC-O      -> MEC-PM   system_level
    (6) Instantiate    MEC-PM     -> VIM      host_internal
    (7) VIM schedules; remote placements send Allocate to the vehicle VI
    (8) AllocateAck    VI         -> VIM      ue_to_host, response

The allocation delay is the (7)-(8) span.  A final AppReady response goes
back to the device app over ue_to_host.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

from vecsim.kernel import InvariantViolation
from vecsim.lifecycle import ViCommand, apply_vi_command
from vecsim.model import (
    LOCAL,
    AppInstance,
    AppState,
    FarEdgeNode,
    MecHost,
    Placement,
    ResourceVector,
    VehicleState,
    fits,
)
from vecsim.scheduling import PoolSnapshot, Scheduler, VehicleSlot
from vecsim.world import World

log = logging.getLogger(__name__)


class RequestPhase(enum.IntEnum):
    AT_UALCMP = 1
    AT_ORCHESTRATOR = 2
    DISCOVERY = 3
    HOST_SELECTED = 4
    AT_VIM = 5
    SCHEDULED = 6
    VI_ALLOCATING = 7
    COMPLETED = 8
    REJECTED = 9


@dataclass
class InstantiationRequest:
    request_id: str
    ue_id: str
    demand: ResourceVector
    issued_at: int
    app_id: str
    phase: RequestPhase = RequestPhase.AT_UALCMP
    host_id: str | None = None
    trail: list[tuple[str, int]] = field(default_factory=list)
    alloc_started: int | None = None
    alloc_done: int | None = None
    reject_reason: str | None = None

    def advance(self, phase: RequestPhase, now: int) -> None:
        if phase is RequestPhase.REJECTED:
            if self.phase >= RequestPhase.COMPLETED:
                raise InvariantViolation(f"request {self.request_id} rejected after finishing")
        elif phase <= self.phase or self.phase >= RequestPhase.COMPLETED:
            raise InvariantViolation(f"request {self.request_id}: {self.phase.name} -> {phase.name}")
        self.phase = phase
        self.trail.append((phase.name, now))

    @property
    def allocation_delay(self) -> int | None:
        if self.alloc_started is None or self.alloc_done is None:
            return None
        return self.alloc_done - self.alloc_started

    def record(self) -> dict:
        return {
            "request_id": self.request_id,
            "ue_id": self.ue_id,
            "app_id": self.app_id,
            "host_id": self.host_id,
            "issued_us": self.issued_at,
            "phase": self.phase.name,
            "phases": [[p, t] for p, t in self.trail],
            "allocation_delay_us": self.allocation_delay,
            "reject_reason": self.reject_reason,
        }


class Vim:
    """Virtualisation infrastructure manager for one host: local VI plus the vehicle pool."""

    def __init__(self, world: World, host: MecHost, scheduler: Scheduler) -> None:
        self.world = world
        self.host = host
        self.scheduler = scheduler
        self.local_reservations: dict[str, ResourceVector] = {}
        self.local_apps: dict[str, None] = {}

    # -- pool membership -------------------------------------------------------------

    def register_vehicle(self, v: FarEdgeNode) -> None:
        w = self.world
        self.host.pool[v.id] = v
        v.state = VehicleState.REGISTERED
        v.join_time = w.now
        v.host_id = self.host.id
        self._occupancy()

    def remove_vehicle(self, v: FarEdgeNode) -> list[str]:
        """Drop the vehicle from the pool and return the apps still placed on it."""
        self.host.pool.pop(v.id, None)
        self._occupancy()
        return list(v.hosted_apps)

    def _occupancy(self) -> None:
        w = self.world
        if w.measuring():
            w.metrics.occupancy.append((w.now - w.measure_from, len(self.host.pool)))

    def snapshot(self) -> PoolSnapshot:
        return PoolSnapshot(
            tuple(VehicleSlot(v.id, v.free, v.join_time, v.location) for v in self.host.pool.values()),
            self.host.local_free,
            self.world.now,
        )

    # -- accounting ------------------------------------------------------------------

    def reserve_remote(self, app: AppInstance, v: FarEdgeNode) -> None:
        if not fits(app.demand, v.free):
            raise InvariantViolation(f"VIM would over-commit vehicle {v.id}")
        v.allocated = v.allocated + app.demand
        v.hosted_apps[app.id] = None
        app.placement = Placement.remote(v.id)

    def free_remote(self, app: AppInstance, v: FarEdgeNode) -> None:
        v.hosted_apps.pop(app.id)
        v.allocated = v.allocated - app.demand

    def reserve_local(self, app: AppInstance) -> bool:
        if not fits(app.demand, self.host.local_free):
            return False
        self.host.local_allocated = self.host.local_allocated + app.demand
        self.local_reservations[app.id] = app.demand
        return True

    def free_local(self, app: AppInstance) -> None:
        demand = self.local_reservations.pop(app.id, None)
        if demand is not None:
            self.host.local_allocated = self.host.local_allocated - demand
        self.local_apps.pop(app.id, None)

    # -- scheduling ------------------------------------------------------------------

    def schedule_and_allocate(self, req: InstantiationRequest) -> AppInstance | None:
        w = self.world
        app = w.apps[req.app_id]
        if req.phase is not RequestPhase.AT_VIM:
            raise InvariantViolation(f"request {req.request_id} reached scheduling in {req.phase.name}")
        app.transition(AppState.SCHEDULING)
        req.alloc_started = w.now
        placement = self.scheduler.decide(self.snapshot(), app.demand, w.now)
        if placement is not None and not placement.is_local:
            v = self.host.pool.get(placement.vehicle_id)
            if v is None or not fits(app.demand, v.free):
                raise InvariantViolation(f"scheduler {self.scheduler.name} returned infeasible {placement}")
        elif not fits(app.demand, self.host.local_free):
            w.orchestrator.reject(req, "no-capacity")
            return None
        else:
            placement = LOCAL
        req.advance(RequestPhase.SCHEDULED, w.now)

        if placement.is_local:
            self.reserve_local(app)
            self.local_apps[app.id] = None
            app.placement = LOCAL
            req.advance(RequestPhase.VI_ALLOCATING, w.now)
            w.net.local("host_internal", "vi:local-allocate", "vim", "local-vi",
                        lambda: self._allocated(req, app), app.id)
            return app

        v = self.host.pool[placement.vehicle_id]
        self.reserve_remote(app, v)
        req.advance(RequestPhase.VI_ALLOCATING, w.now)
        w.net.send("ue_to_host", "Allocate", "vim", v.id, lambda: self._on_allocate(req, app, v), "request", app.id)
        return app

    def _on_allocate(self, req: InstantiationRequest, app: AppInstance, v: FarEdgeNode) -> None:
        if app.state is AppState.TERMINATED or not v.reachable:
            # vehicle cut off while the command was in flight
            if app.state is not AppState.TERMINATED:
                self.world.ams.cancel(app.id, "vehicle-lost")
            self.world.orchestrator.reject(req, "vehicle-lost")
            return
        if not apply_vi_command(v, ViCommand.ALLOCATE, app.id, app.demand):
            raise InvariantViolation(f"vehicle {v.id} nacked Allocate for {app.id}")
        self.world.net.send("ue_to_host", "AllocateAck", v.id, "vim", lambda: self._allocated(req, app), "response", app.id)

    def _allocated(self, req: InstantiationRequest, app: AppInstance) -> None:
        w = self.world
        req.alloc_done = w.now
        app.transition(AppState.INSTANTIATED)
        app.transition(AppState.RUNNING)
        req.advance(RequestPhase.COMPLETED, w.now)
        w.orchestrator.completed(req, app)

    # -- termination -----------------------------------------------------------------

    def release(self, app: AppInstance) -> None:
        """Free wherever the app currently holds resources and mark it terminated."""
        w = self.world
        if app.placement is not None and not app.placement.is_local:
            v = w.vehicles[app.placement.vehicle_id]
            if app.id in v.hosted_apps:
                self.free_remote(app, v)
                self.send_release(v, app.id)
                w.lifecycle.maybe_departed(v)
        self.free_local(app)
        app.transition(AppState.TERMINATED)
        app.terminated_at = w.now

    def send_release(self, v: FarEdgeNode, app_id: str) -> None:
        if not v.reachable:
            return
        self.world.net.send("ue_to_host", "Release", "vim", v.id,
                            lambda: apply_vi_command(v, ViCommand.RELEASE, app_id), detail=app_id)


class Orchestrator:
    """UALCMP, MEC orchestrator and MEC platform manager hops in front of the VIMs."""

    def __init__(self, world: World) -> None:
        self.world = world
        self.requests: dict[str, InstantiationRequest] = {}
        self._terminate_when_running: set[str] = set()
        self._seq = 0

    def request_app(self, ue_id: str, demand: ResourceVector, at: int | None = None,
                    app_id: str | None = None) -> InstantiationRequest:
        w = self.world
        self._seq += 1
        rid = f"req-{self._seq:06d}"
        app_id = app_id or f"app-{self._seq:06d}"
        at = w.now if at is None else at
        req = InstantiationRequest(rid, ue_id, demand, at, app_id)
        req.trail.append((req.phase.name, at))
        self.requests[rid] = req
        if app_id not in w.apps:
            w.apps[app_id] = AppInstance(app_id, ue_id, demand, context_size=w.context_bytes, created_at=at)
        app = w.apps[app_id]

        def send():
            w.arrived(app)
            w.net.send("ue_to_host", "AppRequest", ue_id, "ualcmp", lambda: self._at_ualcmp(req), "request", rid)

        if at > w.now:
            w.engine.schedule(at, "ue:arrive", send, target=ue_id)
        else:
            send()
        return req

    def _at_ualcmp(self, req):
        self.world.net.send("system_level", "Forward", "ualcmp", "meco", lambda: self._at_meco(req), detail=req.request_id)

    def _at_meco(self, req):
        req.advance(RequestPhase.AT_ORCHESTRATOR, self.world.now)
        if not self.world.hosts:
            self.reject(req, "no-host")
            return
        req.advance(RequestPhase.DISCOVERY, self.world.now)
        self.world.net.send("system_level", "Discovery", "meco", "mech", lambda: self._discovered(req), detail=req.request_id)

    def _discovered(self, req):
        host = self.select_host(req.demand)
        if host is None:
            self.world.net.send("system_level", "DiscoveryReply", "mech", "meco",
                                lambda: self.reject(req, "no-capacity"), detail=req.request_id)
            return
        self.world.net.send("system_level", "DiscoveryReply", host.id, "meco",
                            lambda: self._selected(req, host), detail=req.request_id)

    def select_host(self, demand: ResourceVector) -> MecHost | None:
        """Host able to take the demand somewhere, preferring the most aggregate free capacity."""
        best, best_key = None, None
        for host_id in sorted(self.world.hosts):
            host = self.world.hosts[host_id]
            feasible = fits(demand, host.local_free) or any(fits(demand, v.free) for v in host.pool.values())
            if not feasible:
                continue
            key = host.aggregate_free().as_tuple()
            if best_key is None or key > best_key:
                best, best_key = host, key
        return best

    def _selected(self, req, host):
        w = self.world
        req.host_id = host.id
        req.advance(RequestPhase.HOST_SELECTED, w.now)
        w.net.send("system_level", "Instantiate", "meco", f"mecpm:{host.id}", lambda: self._at_pm(req, host), detail=req.request_id)

    def _at_pm(self, req, host):
        self.world.net.send("host_internal", "Instantiate", f"mecpm:{host.id}", f"vim:{host.id}",
                            lambda: self._at_vim(req, host), detail=req.request_id)

    def _at_vim(self, req, host):
        req.advance(RequestPhase.AT_VIM, self.world.now)
        self.world.vims[host.id].schedule_and_allocate(req)

    def reject(self, req: InstantiationRequest, reason: str) -> None:
        w = self.world
        req.advance(RequestPhase.REJECTED, w.now)
        req.reject_reason = reason
        app = w.apps[req.app_id]
        if app.state is not AppState.TERMINATED:
            app.transition(AppState.TERMINATED)
            app.terminated_at = w.now
        self._terminate_when_running.discard(app.id)
        if w.measuring(req.issued_at):
            w.metrics.rejected_requests += 1
            w.metrics.requests.append(req.record())

    def completed(self, req: InstantiationRequest, app: AppInstance) -> None:
        w = self.world
        if w.measuring(req.issued_at):
            w.metrics.completed_requests += 1
            w.metrics.allocation_delays[app.id] = req.allocation_delay
            w.metrics.requests.append(req.record())
        w.net.send("ue_to_host", "AppReady", "ualcmp", req.ue_id, lambda: None, "response", req.request_id)
        if app.id in self._terminate_when_running:
            self._terminate_when_running.discard(app.id)
            self.terminate_app(app.id)
            return
        w.ams.app_running(app.id)

    def terminate_app(self, app_id: str, at: int | None = None) -> None:
        w = self.world
        if at is not None and at > w.now:
            w.engine.schedule(at, "ue:session-end", lambda: self.terminate_app(app_id), target=app_id)
            return
        app = w.apps.get(app_id)
        if app is None:
            log.warning("terminate for unknown app %s", app_id)
            return
        if app.state is AppState.TERMINATED:
            return
        if app.state in (AppState.REQUESTED, AppState.SCHEDULING, AppState.INSTANTIATED):
            self._terminate_when_running.add(app_id)
            return
        if app.state in (AppState.MIGRATION_PENDING, AppState.CONTEXT_TRANSFERRING):
            w.ams.cancel(app_id, "terminated")
            return
        vim = self.vim_of(app)
        vim.release(app)

    def vim_of(self, app: AppInstance) -> Vim:
        w = self.world
        if app.placement is not None and not app.placement.is_local:
            return w.vims[w.vehicles[app.placement.vehicle_id].host_id]
        for vim in w.vims.values():
            if app.id in vim.local_reservations:
                return vim
        return next(iter(w.vims.values()))
