"""Event engine, seeded random streams and the message-latency law.

Simulated time is an integer count of microseconds since the start of a run.
"""

from __future__ import annotations

import csv
import heapq
import zlib
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

US_PER_MS = 1_000
US_PER_S = 1_000_000
US_PER_HOUR = 3_600 * US_PER_S
US_PER_DAY = 24 * US_PER_HOUR

LINK_CLASSES = ("ue_to_host", "vehicle_to_broker", "broker_to_host", "host_internal", "system_level")


def seconds(s: float) -> int:
    return int(round(s * US_PER_S))


def millis(ms: float) -> int:
    return int(round(ms * US_PER_MS))


class SchedulingError(RuntimeError):
    """An event was scheduled before the current clock."""


class ConfigError(ValueError):
    pass


class InvariantViolation(AssertionError):
    """A model invariant tripped while the simulation was running."""


@dataclass(slots=True)
class Event:
    fire_at: int
    seq: int
    kind: str
    handler: Callable[[], None] | None = field(default=None, repr=False)
    source: str = ""
    target: str = ""
    detail: str = ""


class Engine:
    """Single-threaded event loop ordered by ``(fire_at, seq)``.

    Ties at equal timestamps are broken by insertion order.  When ``trace`` is
    true every processed event is appended to :attr:`log`.
    """

    def __init__(self, trace: bool = False) -> None:
        self.now = 0
        self._queue: list[tuple[int, int, Event]] = []
        self._seq = 0
        self.processed = 0
        self.log: list[Event] | None = [] if trace else None
        self.after_event: list[Callable[[Event], None]] = []

    def schedule(
        self,
        at: int,
        kind: str,
        handler: Callable[[], None] | None = None,
        source: str = "",
        target: str = "",
        detail: str = "",
    ) -> Event:
        at = int(at)
        if at < self.now:
            raise SchedulingError(f"event {kind!r} at {at}us is before clock {self.now}us")
        self._seq += 1
        ev = Event(at, self._seq, kind, handler, source, target, detail)
        heapq.heappush(self._queue, (at, self._seq, ev))
        return ev

    def schedule_in(self, delay: int, kind: str, handler=None, source="", target="", detail="") -> Event:
        return self.schedule(self.now + int(delay), kind, handler, source, target, detail)

    def pop(self) -> Event | None:
        """Remove and return the next event; ``None`` means the simulation is complete."""
        if not self._queue:
            return None
        return heapq.heappop(self._queue)[2]

    def peek_time(self) -> int | None:
        return self._queue[0][0] if self._queue else None

    @property
    def pending(self) -> int:
        return len(self._queue)

    def step(self) -> Event | None:
        ev = self.pop()
        if ev is None:
            return None
        self.now = ev.fire_at
        if ev.handler is not None:
            ev.handler()
        self.processed += 1
        if self.log is not None:
            self.log.append(ev)
        for hook in self.after_event:
            hook(ev)
        return ev

    def run_until(self, horizon: int) -> int:
        """Process every event with ``fire_at <= horizon``; return how many ran."""
        count = 0
        while self._queue and self._queue[0][0] <= horizon:
            self.step()
            count += 1
        if not self._queue:
            return count
        self.now = max(self.now, min(horizon, self._queue[0][0]))
        return count

    def run(self) -> int:
        count = 0
        while self.step() is not None:
            count += 1
        return count


def write_trace(events: Iterable[Event], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_us", "seq", "kind", "source", "target", "detail"])
        for ev in events:
            w.writerow([ev.fire_at, ev.seq, ev.kind, ev.source, ev.target, ev.detail])


class RngStreams:
    """Named random substreams fanned out from one seed.

    Each name maps to an independent ``numpy.random.Generator`` whose state
    depends only on ``(seed, name)``, so drawing from one stream never
    perturbs another.
    """

    def __init__(self, seed: int) -> None:
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def stream(self, name: str) -> np.random.Generator:
        gen = self._streams.get(name)
        if gen is None:
            key = zlib.crc32(name.encode("utf-8"))
            gen = np.random.default_rng(np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, key]))
            self._streams[name] = gen
        return gen

    def __getitem__(self, name: str) -> np.random.Generator:
        return self.stream(name)


@dataclass(frozen=True)
class LinkParams:
    base_us: int
    jitter_us: int = 0
    queue_us: float = 0.0

    def __post_init__(self):
        if self.base_us < 0 or self.jitter_us < 0 or self.queue_us < 0:
            raise ConfigError(f"latency parameters must be non-negative: {self}")


@dataclass
class LatencyModel:
    """Per-link latency law: ``base + U(-jitter, +jitter) + in_flight * queue``, floored at 0."""

    links: dict[str, LinkParams]

    def sample(self, link: str, in_flight: int = 0, rng: np.random.Generator | None = None) -> int:
        try:
            p = self.links[link]
        except KeyError:
            raise ConfigError(f"unknown link class {link!r}") from None
        jitter = 0.0
        if p.jitter_us and rng is not None:
            jitter = rng.uniform(-p.jitter_us, p.jitter_us)
        return max(0, int(round(p.base_us + jitter + in_flight * p.queue_us)))

    def with_link(self, link: str, **changes) -> LatencyModel:
        links = dict(self.links)
        old = links.get(link, LinkParams(0))
        links[link] = LinkParams(
            base_us=changes.get("base_us", old.base_us),
            jitter_us=changes.get("jitter_us", old.jitter_us),
            queue_us=changes.get("queue_us", old.queue_us),
        )
        return LatencyModel(links)

    def without_jitter(self) -> LatencyModel:
        return LatencyModel({k: LinkParams(v.base_us, 0, v.queue_us) for k, v in self.links.items()})

    @classmethod
    def uniform(cls, base_us: int, jitter_us: int = 0, queue_us: float = 0.0) -> LatencyModel:
        return cls({k: LinkParams(base_us, jitter_us, queue_us) for k in LINK_CLASSES})

    def to_dict(self) -> dict:
        return {
            k: {"base_us": v.base_us, "jitter_us": v.jitter_us, "queue_us": v.queue_us}
            for k, v in sorted(self.links.items())
        }

    @classmethod
    def from_dict(cls, d: dict) -> LatencyModel:
        return cls({k: LinkParams(int(v["base_us"]), int(v.get("jitter_us", 0)), float(v.get("queue_us", 0.0)))
                    for k, v in d.items()})


class Network:
    """Reliable message transport with a congestion count per link class.

    Request and response messages form exchanges; while a request or response
    is travelling it counts as in flight on its link, and each such message
    pays ``in_flight * queue_us`` on top of the base latency.  One-way
    messages (publications, notifications, commands) pay base plus jitter only.
    """

    def __init__(self, engine: Engine, latency: LatencyModel, rng: np.random.Generator) -> None:
        self.engine = engine
        self.latency = latency
        self.rng = rng
        self.in_flight: dict[str, int] = {k: 0 for k in latency.links}
        self.sent = 0

    def send(
        self,
        link: str,
        kind: str,
        src: str,
        dst: str,
        on_delivery: Callable[[], None],
        role: str = "oneway",
        detail: str = "",
    ) -> int:
        """Schedule delivery and return the sampled latency in microseconds."""
        if role == "oneway":
            delay = self.latency.sample(link, 0, self.rng)
        else:
            count = self.in_flight.get(link, 0)
            delay = self.latency.sample(link, count, self.rng)
            self.in_flight[link] = count + 1

        def deliver():
            if role != "oneway":
                self.in_flight[link] -= 1
            on_delivery()

        self.sent += 1
        self.engine.schedule_in(delay, f"msg:{kind}", deliver, src, dst, detail)
        return delay

    def local(self, link: str, kind: str, src: str, dst: str, on_done: Callable[[], None], detail: str = "") -> int:
        """Processing delay inside one entity, e.g. VIM to local VI."""
        delay = self.latency.sample(link, 0, self.rng)
        self.engine.schedule_in(delay, kind, on_done, src, dst, detail)
        return delay
