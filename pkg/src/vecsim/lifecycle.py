"""Vehicle-side acquisition and release protocols and the VI command agent.

Acquisition, six messages::

    (1) RewardRequest  vehicle -> broker   request
    (2) RewardOffer    broker  -> vehicle  response to (1)
    (3) ResourcePost   vehicle -> broker   request (location, offer, endpoint)
    (4) JoinNotify     broker  -> VIM      one-way; VIM inserts the vehicle in its pool
    (5) RegisterAck    VIM     -> broker   one-way
    (6) JoinConfirm    broker  -> vehicle  response to (3)

The join time is measured from sending (1) to the VIM processing (4).

Release, four messages::

    (1) LeavePublish   vehicle -> broker   one-way
    (2) LeaveNotify    broker  -> VIM      one-way; VIM drops the vehicle from its pool
    (3) LeaveAck       VIM     -> broker   one-way
    (4) LeaveConfirm   broker  -> vehicle  one-way

The release time spans sending (1) to the pool update on receipt of (2).
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable

from vecsim.broker import Publication, PublicationKind
from vecsim.kernel import InvariantViolation
from vecsim.model import FarEdgeNode, ResourceVector, VehicleState, ZERO, fits
from vecsim.world import World

log = logging.getLogger(__name__)


class AcquisitionPhase(enum.IntEnum):
    REWARD_REQUESTED = 1
    REWARD_OFFERED = 2
    PUBLISHED = 3
    HOST_NOTIFIED = 4
    HOST_ACKED = 5
    CONFIRMED = 6


class ReleasePhase(enum.IntEnum):
    LEAVE_PUBLISHED = 1
    HOST_NOTIFIED = 2
    POOL_UPDATED = 3
    ACKED = 4


@dataclass
class AcquisitionSession:
    vehicle_id: str
    started_at: int
    phase: AcquisitionPhase = AcquisitionPhase.REWARD_REQUESTED
    completed_at: int | None = None
    recognized_at: int | None = None
    host_id: str | None = None
    outcome: str = "open"
    messages: list[str] = field(default_factory=list)

    def advance(self, phase: AcquisitionPhase) -> None:
        if phase != self.phase + 1:
            raise InvariantViolation(f"acquisition {self.vehicle_id}: {self.phase.name} -> {phase.name}")
        self.phase = phase

    @property
    def join_time(self) -> int | None:
        return None if self.recognized_at is None else self.recognized_at - self.started_at

    def record(self) -> dict:
        return {
            "vehicle_id": self.vehicle_id,
            "host_id": self.host_id,
            "started_us": self.started_at,
            "recognized_us": self.recognized_at,
            "completed_us": self.completed_at,
            "phase": self.phase.name,
            "outcome": self.outcome,
            "messages": list(self.messages),
        }


@dataclass
class ReleaseSession:
    vehicle_id: str
    started_at: int
    phase: ReleasePhase = ReleasePhase.LEAVE_PUBLISHED
    completed_at: int | None = None
    pool_updated_at: int | None = None
    pending_migrations: list[str] = field(default_factory=list)
    messages: list[str] = field(default_factory=list)

    def advance(self, phase: ReleasePhase) -> None:
        if phase != self.phase + 1:
            raise InvariantViolation(f"release {self.vehicle_id}: {self.phase.name} -> {phase.name}")
        self.phase = phase

    @property
    def release_time(self) -> int | None:
        return None if self.pool_updated_at is None else self.pool_updated_at - self.started_at

    def record(self) -> dict:
        return {
            "vehicle_id": self.vehicle_id,
            "started_us": self.started_at,
            "pool_updated_us": self.pool_updated_at,
            "completed_us": self.completed_at,
            "phase": self.phase.name,
            "messages": list(self.messages),
            "pending_migrations": list(self.pending_migrations),
        }


class ViCommand(enum.Enum):
    ALLOCATE = "Allocate"
    RELEASE = "Release"
    PREPARE_MIGRATION = "PrepareMigration"


def apply_vi_command(vehicle: FarEdgeNode, cmd: ViCommand, app_id: str, demand: ResourceVector = ZERO) -> bool:
    """Apply a VIM instruction on the vehicle's own VI; returns ack (True) or nack."""
    if cmd is ViCommand.ALLOCATE:
        if vehicle.state is not VehicleState.REGISTERED and vehicle.state is not VehicleState.DEPARTING:
            return False
        used = ZERO
        for d in vehicle.vi_apps.values():
            used = used + d
        if app_id in vehicle.vi_apps or not fits(demand, vehicle.capacity - used):
            return False
        vehicle.vi_apps[app_id] = demand
        return True
    if cmd is ViCommand.RELEASE:
        return vehicle.vi_apps.pop(app_id, None) is not None
    if cmd is ViCommand.PREPARE_MIGRATION:
        return app_id in vehicle.vi_apps
    raise ValueError(cmd)


def accept_first(offers: list[tuple[str, int]]) -> str | None:
    """Default reward policy: take the first offer (hosts ordered by id)."""
    return offers[0][0] if offers else None


class ResourceLifecycle:
    def __init__(self, world: World, reward_policy: Callable[[list[tuple[str, int]]], str | None] = accept_first):
        self.world = world
        self.reward_policy = reward_policy
        self.acquisitions: dict[str, AcquisitionSession] = {}
        self.releases: dict[str, ReleaseSession] = {}
        self._leave_after_join: set[str] = set()
        world.broker.notify = self._broker_notify

    # -- acquisition -------------------------------------------------------------

    def vehicle_join(self, vehicle: FarEdgeNode, at: int | None = None) -> AcquisitionSession:
        w = self.world
        at = w.now if at is None else at
        if vehicle.state is not VehicleState.OUTSIDE:
            raise ValueError(f"vehicle {vehicle.id} is {vehicle.state.value}, expected Outside")
        w.vehicles.setdefault(vehicle.id, vehicle)
        session = AcquisitionSession(vehicle.id, at)
        self.acquisitions[vehicle.id] = session
        if at == w.now:
            self._send_reward_request(vehicle, session)
        else:
            w.engine.schedule(at, "vehicle:arrive", lambda: self._send_reward_request(vehicle, session), target=vehicle.id)
        return session

    def _send_reward_request(self, v: FarEdgeNode, s: AcquisitionSession) -> None:
        v.state = VehicleState.REWARD_PENDING
        s.started_at = self.world.now
        self.world.arrived(v)
        self._msg(s, "vehicle_to_broker", "RewardRequest", v.id, "broker", lambda: self._on_reward_request(v, s), "request")

    def _on_reward_request(self, v: FarEdgeNode, s: AcquisitionSession) -> None:
        offers = self.world.broker.get_rewards(v.id, v.location)
        if not offers:
            self._abort(v, s, "no-host")
            return
        detail = ";".join(f"{h}={r}" for h, r in offers)
        self._msg(s, "vehicle_to_broker", "RewardOffer", "broker", v.id,
                  lambda: self._on_reward_offer(v, s, offers), "response", detail)

    def _on_reward_offer(self, v: FarEdgeNode, s: AcquisitionSession, offers) -> None:
        s.advance(AcquisitionPhase.REWARD_OFFERED)
        host_id = self.reward_policy(offers)
        if host_id is None:
            self._abort(v, s, "declined")
            return
        s.host_id = host_id
        pub = Publication(v.id, v.location, v.capacity, PublicationKind.JOIN, v.endpoint)
        self._msg(s, "vehicle_to_broker", "ResourcePost", v.id, "broker", lambda: self._on_post(v, s, pub), "request")

    def _on_post(self, v: FarEdgeNode, s: AcquisitionSession, pub: Publication) -> None:
        s.advance(AcquisitionPhase.PUBLISHED)
        self.world.broker.publish(pub)

    def _broker_notify(self, host_id: str, pub: Publication) -> None:
        if pub.kind is PublicationKind.JOIN:
            s = self.acquisitions.get(pub.vehicle_id)
            if s is None or s.host_id != host_id:
                # another host won this vehicle's reward; the notification is informational
                self.world.net.send("broker_to_host", "JoinNotify", "broker", host_id, lambda: None)
                return
            v = self.world.vehicles[pub.vehicle_id]
            self._msg(s, "broker_to_host", "JoinNotify", "broker", host_id, lambda: self._on_join_notify(v, s, host_id))
        else:
            s = self.releases.get(pub.vehicle_id)
            v = self.world.vehicles.get(pub.vehicle_id)
            if s is None or v is None or v.host_id != host_id:
                self.world.net.send("broker_to_host", "LeaveNotify", "broker", host_id, lambda: None)
                return
            self._msg(s, "broker_to_host", "LeaveNotify", "broker", host_id, lambda: self._on_leave_notify(v, s, host_id))

    def _on_join_notify(self, v: FarEdgeNode, s: AcquisitionSession, host_id: str) -> None:
        w = self.world
        s.advance(AcquisitionPhase.HOST_NOTIFIED)
        w.vims[host_id].register_vehicle(v)
        s.recognized_at = w.now
        if w.measuring(s.started_at):
            w.metrics.join_times[v.id] = s.join_time
        self._msg(s, "broker_to_host", "RegisterAck", host_id, "broker", lambda: self._on_register_ack(v, s))

    def _on_register_ack(self, v: FarEdgeNode, s: AcquisitionSession) -> None:
        s.advance(AcquisitionPhase.HOST_ACKED)
        self._msg(s, "vehicle_to_broker", "JoinConfirm", "broker", v.id, lambda: self._on_confirm(v, s), "response")

    def _on_confirm(self, v: FarEdgeNode, s: AcquisitionSession) -> None:
        s.advance(AcquisitionPhase.CONFIRMED)
        s.completed_at = self.world.now
        s.outcome = "completed"
        self._export(s)
        if v.id in self._leave_after_join:
            self._leave_after_join.discard(v.id)
            self.vehicle_leave(v.id)

    def _abort(self, v: FarEdgeNode, s: AcquisitionSession, why: str) -> None:
        s.outcome = f"aborted:{why}"
        s.completed_at = self.world.now
        v.state = VehicleState.OUTSIDE
        self._export(s)
        if v.id in self._leave_after_join:
            self._leave_after_join.discard(v.id)
            v.state = VehicleState.DEPARTED

    def _export(self, s: AcquisitionSession) -> None:
        if self.world.measuring(s.started_at):
            self.world.metrics.acquisition_sessions.append(s.record())

    # -- release -------------------------------------------------------------------

    def vehicle_leave(self, vehicle_id: str, at: int | None = None) -> ReleaseSession | None:
        w = self.world
        if at is not None and at > w.now:
            w.engine.schedule(at, "vehicle:depart", lambda: self.vehicle_leave(vehicle_id), target=vehicle_id)
            return None
        v = w.vehicles.get(vehicle_id)
        if v is None:
            log.warning("leave for unknown vehicle %s", vehicle_id)
            return None
        if v.state is VehicleState.REWARD_PENDING:
            self._leave_after_join.add(vehicle_id)
            return None
        if v.state is VehicleState.OUTSIDE:
            # never joined (no host, declined): just drives away
            v.state = VehicleState.DEPARTED
            return None
        if v.state is not VehicleState.REGISTERED:
            log.warning("leave for vehicle %s in state %s ignored", vehicle_id, v.state.value)
            return None
        v.state = VehicleState.DEPARTING
        s = ReleaseSession(vehicle_id, w.now)
        self.releases[vehicle_id] = s
        pub = Publication(v.id, v.location, v.capacity, PublicationKind.LEAVE, v.endpoint)
        self._msg(s, "vehicle_to_broker", "LeavePublish", v.id, "broker", lambda: w.broker.publish(pub))
        if w.hard_cutoff_us is not None:
            w.engine.schedule_in(w.hard_cutoff_us, "vehicle:unreachable", lambda: self._cut_off(v), target=v.id)
        return s

    def _on_leave_notify(self, v: FarEdgeNode, s: ReleaseSession, host_id: str) -> None:
        w = self.world
        s.advance(ReleasePhase.HOST_NOTIFIED)
        apps = w.vims[host_id].remove_vehicle(v)
        s.advance(ReleasePhase.POOL_UPDATED)
        s.pool_updated_at = w.now
        s.pending_migrations = apps
        if w.measuring(s.started_at):
            w.metrics.release_times[v.id] = s.release_time
        for app_id in apps:
            w.ams.trigger(app_id, v.id)
        self._msg(s, "broker_to_host", "LeaveAck", host_id, "broker", lambda: self._on_leave_ack(v, s))

    def _on_leave_ack(self, v: FarEdgeNode, s: ReleaseSession) -> None:
        self._msg(s, "vehicle_to_broker", "LeaveConfirm", "broker", v.id, lambda: self._on_leave_confirm(v, s))

    def _on_leave_confirm(self, v: FarEdgeNode, s: ReleaseSession) -> None:
        s.advance(ReleasePhase.ACKED)
        s.completed_at = self.world.now
        if self.world.measuring(s.started_at):
            self.world.metrics.release_sessions.append(s.record())
        self.maybe_departed(v)

    def _cut_off(self, v: FarEdgeNode) -> None:
        v.reachable = False
        self.world.ams.vehicle_unreachable(v.id)
        self.maybe_departed(v)

    def maybe_departed(self, v: FarEdgeNode) -> None:
        """Departing vehicles drive off once their release is acknowledged and no app is left on them."""
        s = self.releases.get(v.id)
        if v.state is not VehicleState.DEPARTING or s is None or s.phase is not ReleasePhase.ACKED:
            return
        if v.hosted_apps:
            return
        v.state = VehicleState.DEPARTED
        v.join_time = None
        v.reachable = False
        v.vi_apps.clear()

    # -- plumbing ------------------------------------------------------------------

    def _msg(self, session, link, kind, src, dst, then, role="oneway", detail=""):
        session.messages.append(kind)
        self.world.net.send(link, kind, src, dst, then, role, detail)
