"""System-level publish/subscribe broker with AoI-based content filters."""

from __future__ import annotations

import enum
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Callable

from vecsim.model import AreaOfInterest, GeoPoint, ResourceVector, contains

log = logging.getLogger(__name__)


class PublicationKind(enum.Enum):
    JOIN = "Join"
    LEAVE = "Leave"


@dataclass(frozen=True)
class Subscription:
    id: int
    subscriber: str
    filter: AreaOfInterest


@dataclass(frozen=True)
class Publication:
    vehicle_id: str
    location: GeoPoint
    offered: ResourceVector
    kind: PublicationKind
    endpoint: str = ""

    def __post_init__(self):
        if self.kind is PublicationKind.JOIN and self.offered.is_zero():
            raise ValueError("join publication must offer some resource")


class Broker:
    """Matches vehicle publications against host subscriptions by linear scan.

    ``notify(host_id, publication)`` is called once per matching subscriber;
    the simulation uses it to put a broker-to-host message on the wire.
    """

    def __init__(self, notify: Callable[[str, Publication], None] | None = None) -> None:
        self._subs: list[Subscription] = []
        self._by_key: dict[tuple[str, AreaOfInterest], Subscription] = {}
        self._rewards: dict[str, int] = {}
        self._joins: Counter[str] = Counter()
        self._leaves: Counter[str] = Counter()
        self.notify = notify or (lambda host, pub: None)
        self.warnings = 0

    def register_host(self, host_id: str, reward_offer: int) -> None:
        self._rewards[host_id] = int(reward_offer)

    def subscribe(self, host_id: str, aoi: AreaOfInterest) -> int:
        key = (host_id, aoi)
        existing = self._by_key.get(key)
        if existing is not None:
            return existing.id
        sub = Subscription(len(self._subs) + 1, host_id, aoi)
        self._subs.append(sub)
        self._by_key[key] = sub
        return sub.id

    @property
    def subscriptions(self) -> tuple[Subscription, ...]:
        return tuple(self._subs)

    def matching_hosts(self, location: GeoPoint) -> list[str]:
        """Distinct subscribers whose filter contains ``location``, in subscription order."""
        seen: dict[str, None] = {}
        for sub in self._subs:
            if sub.subscriber not in seen and contains(sub.filter, location):
                seen[sub.subscriber] = None
        return list(seen)

    def publish(self, pub: Publication) -> int:
        if pub.kind is PublicationKind.LEAVE:
            if self._leaves[pub.vehicle_id] >= self._joins[pub.vehicle_id]:
                log.warning("leave publication for unknown vehicle %s", pub.vehicle_id)
                self.warnings += 1
                return 0
            self._leaves[pub.vehicle_id] += 1
        else:
            self._joins[pub.vehicle_id] += 1
        hosts = self.matching_hosts(pub.location)
        for host in hosts:
            self.notify(host, pub)
        return len(hosts)

    def get_rewards(self, vehicle_id: str, location: GeoPoint) -> list[tuple[str, int]]:
        hosts = self.matching_hosts(location)
        return sorted((h, self._rewards.get(h, 0)) for h in hosts)

    def join_count(self, vehicle_id: str) -> int:
        return self._joins[vehicle_id]

    def leave_count(self, vehicle_id: str) -> int:
        return self._leaves[vehicle_id]
