"""Application mobility: MEC-assisted migration from a departing vehicle to the local VI."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

from vecsim.kernel import US_PER_HOUR, US_PER_S
from vecsim.lifecycle import ViCommand, apply_vi_command
from vecsim.model import LOCAL, AppState
from vecsim.world import World

log = logging.getLogger(__name__)

MIGRATION_CSV_COLUMNS = ("app_id", "vehicle_id", "triggered_us", "completed_us", "context_bytes", "outcome")


@dataclass
class MigrationEvent:
    app_id: str
    source: str
    triggered_at: int
    context_bytes: int
    completed_at: int | None = None
    outcome: str | None = None
    transfer_started: int | None = None
    dest: str = "local"

    def record(self, offset: int = 0) -> dict:
        return {
            "app_id": self.app_id,
            "vehicle_id": self.source,
            "triggered_us": self.triggered_at - offset,
            "completed_us": None if self.completed_at is None else self.completed_at - offset,
            "context_bytes": self.context_bytes,
            "outcome": self.outcome,
        }


def transfer_time_us(context_bytes: int, rate_bps: float) -> int:
    return int(round(context_bytes * 8 / rate_bps * US_PER_S))


class MobilityService:
    """Turns each app left on a departing vehicle into one migration event chain.

    Chain: reserve local capacity (MigrationPending), notify the source
    instance, transfer the user context (ContextTransferring), start the local
    instance (Running), then release the vehicle-side allocation if the
    vehicle can still be reached.
    """

    def __init__(self, world: World) -> None:
        self.world = world
        self.open: dict[str, MigrationEvent] = {}
        self.deferred: dict[str, MigrationEvent] = {}
        self.log: list[MigrationEvent] = []

    def trigger(self, app_id: str, vehicle_id: str) -> MigrationEvent:
        w = self.world
        app = w.apps[app_id]
        ev = MigrationEvent(app_id, vehicle_id, w.now, app.context_size)
        self.log.append(ev)
        if w.measuring():
            w.metrics.migrations_per_hour[w.hour_of(w.now)] += 1
        if app.state is AppState.RUNNING:
            self.begin_migration(ev)
        elif app.state in (AppState.SCHEDULING, AppState.INSTANTIATED, AppState.REQUESTED):
            # Allocate still in flight; the chain starts once the app runs
            self.deferred[app_id] = ev
        else:
            self._finish(ev, "Cancelled")
        return ev

    def app_running(self, app_id: str) -> None:
        ev = self.deferred.pop(app_id, None)
        if ev is not None:
            self.begin_migration(ev)

    def begin_migration(self, ev: MigrationEvent) -> None:
        w = self.world
        app = w.apps[ev.app_id]
        if app.state is not AppState.RUNNING or app.placement is None or app.placement.vehicle_id != ev.source:
            raise ValueError(f"app {app.id} is not running on {ev.source}")
        v = w.vehicles[ev.source]
        vim = w.vims[v.host_id]
        self.open[app.id] = ev
        if not vim.reserve_local(app):
            self.cancel(app.id, "no-local-capacity")
            return
        app.transition(AppState.MIGRATION_PENDING)
        w.net.send("ue_to_host", "PrepareMigration", "ams", v.id, lambda: self._on_prepare(ev), detail=app.id)

    def _on_prepare(self, ev: MigrationEvent) -> None:
        w = self.world
        app = w.apps[ev.app_id]
        if app.state is not AppState.MIGRATION_PENDING:
            return
        v = w.vehicles[ev.source]
        if not v.reachable or not apply_vi_command(v, ViCommand.PREPARE_MIGRATION, app.id):
            self.cancel(app.id, "source-unreachable")
            return
        app.transition(AppState.CONTEXT_TRANSFERRING)
        ev.transfer_started = w.now
        duration = transfer_time_us(ev.context_bytes, w.transfer_rate_bps) + w.net.latency.sample(
            "ue_to_host", 0, w.net.rng
        )
        w.engine.schedule_in(duration, "ams:context-transferred", lambda: self._on_transferred(ev), "ams", app.id)

    def _on_transferred(self, ev: MigrationEvent) -> None:
        w = self.world
        app = w.apps[ev.app_id]
        if app.state is not AppState.CONTEXT_TRANSFERRING:
            return
        v = w.vehicles[ev.source]
        vim = w.vims[v.host_id]
        vim.free_remote(app, v)
        app.placement = LOCAL
        vim.local_apps[app.id] = None
        app.transition(AppState.RUNNING)
        vim.send_release(v, app.id)
        if w.measuring(ev.triggered_at):
            w.metrics.service_gaps[app.id] = w.now - ev.transfer_started
        self._finish(ev, "Completed")
        w.lifecycle.maybe_departed(v)

    def cancel(self, app_id: str, reason: str) -> None:
        """Abort whatever is in progress for the app and terminate it, freeing both sides."""
        w = self.world
        app = w.apps[app_id]
        ev = self.open.get(app_id) or self.deferred.pop(app_id, None)
        if app.state is not AppState.TERMINATED:
            w.orchestrator.vim_of(app).release(app)
        if ev is not None:
            self._finish(ev, "Cancelled")
        if reason != "terminated" and w.measuring():
            w.metrics.service_losses += 1

    def vehicle_unreachable(self, vehicle_id: str) -> None:
        """Hard cut-off: migrations that have not started transferring are lost."""
        stranded = [
            a for a, ev in list(self.open.items()) + list(self.deferred.items())
            if ev.source == vehicle_id and self.world.apps[a].state is not AppState.CONTEXT_TRANSFERRING
        ]
        for app_id in stranded:
            self.cancel(app_id, "source-unreachable")

    def _finish(self, ev: MigrationEvent, outcome: str) -> None:
        w = self.world
        ev.outcome = outcome
        ev.completed_at = w.now
        self.open.pop(ev.app_id, None)
        if w.measuring(ev.triggered_at):
            w.metrics.migrations.append(ev.record(w.measure_from))


def migrations_per_hour(events: Iterable[MigrationEvent], offset: int = 0) -> list[int]:
    """Hourly counts of triggered migrations over a 24 h day starting at ``offset``."""
    counts = [0] * 24
    for ev in events:
        t = ev.triggered_at if isinstance(ev, MigrationEvent) else ev["triggered_us"]
        if t < offset:
            continue
        counts[((t - offset) // US_PER_HOUR) % 24] += 1
    return counts


def write_migration_log(records: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=MIGRATION_CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow({k: ("" if r[k] is None else r[k]) for k in MIGRATION_CSV_COLUMNS})


def write_hourly_counts(counts: Sequence[int], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour", "count"])
        for h, c in enumerate(counts):
            w.writerow([h, c])
