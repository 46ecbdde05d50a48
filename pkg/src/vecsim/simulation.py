"""Wire a :class:`ScenarioConfig` into a runnable world."""

from __future__ import annotations

import json
import math
from pathlib import Path

from vecsim.broker import Broker
from vecsim.kernel import US_PER_DAY, Engine, LatencyModel, Network, RngStreams, seconds, write_trace
from vecsim.lifecycle import ResourceLifecycle
from vecsim.metrics import RunMetrics
from vecsim.mobility import MobilityService, write_hourly_counts, write_migration_log
from vecsim.model import UNBOUNDED, AreaOfInterest, FarEdgeNode, GeoPoint, MecHost, ResourceVector
from vecsim.orchestration import Orchestrator, Vim
from vecsim.scheduling import Scheduler, make_scheduler
from vecsim.workload import DATA_DIR, ScenarioConfig, gen_user_process, gen_vehicle_process
from vecsim.world import World


def bundled_latency() -> LatencyModel:
    return LatencyModel.from_dict(json.loads((DATA_DIR / "calibrated_latency.json").read_text()))


def build_world(
    latency: LatencyModel,
    seed: int = 0,
    *,
    hosts: list[MecHost] | None = None,
    scheduler: str | Scheduler = "round-robin",
    residency=None,
    clock_offset: int = 0,
    trace: bool = False,
    measure_from: int = 0,
    context_bytes: int = 1 << 20,
    transfer_rate_bps: float = 100e6,
    hard_cutoff_us: int | None = None,
    full_checks: bool = False,
) -> World:
    """Assemble engine, network, broker, VIMs, orchestrator and AMS."""
    rngs = RngStreams(seed)
    engine = Engine(trace=trace)
    net = Network(engine, latency, rngs["latency"])
    if hosts is None:
        hosts = [MecHost("mech-1", AreaOfInterest(GeoPoint(0, 0), 500.0))]
    world = World(
        engine=engine,
        net=net,
        broker=Broker(),
        hosts={h.id: h for h in hosts},
        measure_from=measure_from,
        context_bytes=context_bytes,
        transfer_rate_bps=transfer_rate_bps,
        hard_cutoff_us=hard_cutoff_us,
    )
    world.rngs = rngs
    world.lifecycle = ResourceLifecycle(world)
    world.orchestrator = Orchestrator(world)
    world.ams = MobilityService(world)
    for h in hosts:
        sched = scheduler if not isinstance(scheduler, str) else make_scheduler(scheduler, residency, clock_offset)
        world.vims[h.id] = Vim(world, h, sched)
        world.broker.register_host(h.id, h.reward_offer)
        world.broker.subscribe(h.id, h.aoi)
    if full_checks:
        engine.after_event.append(world.check_all)
    return world


def finalize(world: World) -> RunMetrics:
    m = world.metrics
    m.events_processed = world.engine.processed
    m.messages_sent = world.net.sent
    for ev in list(world.ams.open.values()) + list(world.ams.deferred.values()):
        if world.measuring(ev.triggered_at):
            m.migrations.append(ev.record(world.measure_from) | {"outcome": "Open"})
    m.migrations.sort(key=lambda r: (r["triggered_us"], r["app_id"]))
    return m


class Simulation:
    """One scenario run: generates vehicles and users, then drives the engine to the horizon."""

    def __init__(self, config: ScenarioConfig, *, trace: bool = False, full_checks: bool = False,
                 latency: LatencyModel | None = None) -> None:
        self.config = config
        cfg = config
        if latency is None:
            latency = LatencyModel.from_dict(cfg.latency) if cfg.latency else bundled_latency()
        self.latency = latency
        self.warmup = seconds(cfg.warmup_s)
        self.total = self.warmup + seconds(cfg.horizon_s)
        # time of day at simulation start, so that measurement begins at midnight
        self.clock_offset = (-self.warmup) % US_PER_DAY
        self.residency = cfg.load_residency()
        local = UNBOUNDED if cfg.local_capacity is None else ResourceVector.of(cfg.local_capacity)
        center = GeoPoint(*cfg.aoi_center)
        hosts = [
            MecHost(f"mech-{i + 1}", AreaOfInterest(center, cfg.aoi_radius), local, reward_offer=cfg.reward_offer)
            for i in range(cfg.hosts)
        ]
        self.world = build_world(
            latency,
            cfg.seed,
            hosts=hosts,
            scheduler=cfg.scheduler,
            residency=self.residency,
            clock_offset=self.clock_offset,
            trace=trace,
            measure_from=self.warmup,
            context_bytes=cfg.context_bytes,
            transfer_rate_bps=cfg.transfer_rate_bps,
            hard_cutoff_us=None if cfg.hard_cutoff_s is None else seconds(cfg.hard_cutoff_s),
            full_checks=full_checks,
        )
        self._populated = False

    def populate(self) -> None:
        cfg, w = self.config, self.world
        rngs = w.rngs
        lot = GeoPoint(*cfg.lot_center)
        place = rngs["placement"]
        arrivals = gen_vehicle_process(
            cfg.load_vehicle_profile(), self.residency, rngs["vehicles"], self.total, self.clock_offset,
            cfg.capacity_dist(), cfg.min_residency_s,
        )
        for i, va in enumerate(arrivals, 1):
            r = cfg.lot_radius * math.sqrt(place.random())
            theta = 2 * math.pi * place.random()
            loc = GeoPoint(lot.x + r * math.cos(theta), lot.y + r * math.sin(theta))
            v = FarEdgeNode(f"veh-{i:06d}", loc, va.capacity)
            w.vehicles[v.id] = v
            w.lifecycle.vehicle_join(v, at=va.arrival)
            if va.arrival + va.residency <= self.total:
                w.lifecycle.vehicle_leave(v.id, at=va.arrival + va.residency)
        users = gen_user_process(
            cfg.load_user_profile(), cfg.session_dist(), rngs["users"], self.total, self.clock_offset, cfg.demand_dist()
        )
        for i, ua in enumerate(users, 1):
            req = w.orchestrator.request_app(f"ue-{i:06d}", ua.demand, at=ua.arrival, app_id=f"app-{i:06d}")
            if ua.arrival + ua.session <= self.total:
                w.orchestrator.terminate_app(req.app_id, at=ua.arrival + ua.session)
        self._populated = True

    def run(self) -> RunMetrics:
        if not self._populated:
            self.populate()
        self.world.engine.run_until(self.total)
        return finalize(self.world)

    @property
    def events(self):
        return self.world.engine.log or []


def run_scenario(config: ScenarioConfig, *, trace: bool = False, full_checks: bool = False) -> RunMetrics:
    return Simulation(config, trace=trace, full_checks=full_checks).run()


def write_outputs(sim: Simulation, metrics: RunMetrics, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics.save(out / "metrics.json")
    write_migration_log(metrics.migrations, out / "migrations.csv")
    write_hourly_counts(metrics.migrations_per_hour, out / "migrations_per_hour.csv")
    if sim.world.engine.log is not None:
        write_trace(sim.world.engine.log, out / "events.csv")
