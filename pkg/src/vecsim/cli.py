"""Command-line front end.

Exit codes: 0 success, 1 configuration/IO/usage error, 2 invariant violation
during a run.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from vecsim.experiments import compare_schedulers, run_many
from vecsim.kernel import ConfigError, InvariantViolation
from vecsim.metrics import CalibrationTargets, aggregate, calibrate_latency
from vecsim.scheduling import ResidencyModel, SCHEDULER_NAMES
from vecsim.simulation import Simulation, write_outputs
from vecsim.workload import (
    HourlyProfile,
    ScenarioConfig,
    TraceError,
    derive_profiles,
    ingest_parking_csv,
    ingest_user_csv,
    synth_parking_rows,
    write_parking_csv,
)

log = logging.getLogger("vecsim")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _dump_json(obj, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_vary(spec: str) -> tuple[str, list]:
    key, sep, values = spec.partition("=")
    if not sep or not key or not values:
        raise ConfigError(f"--vary expects KEY=V1,V2,... got {spec!r}")
    return key, [_parse_value(v) for v in values.split(",")]


# -- subcommands -------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = ScenarioConfig.load(args.config).replace(seed=args.seed)
    sim = Simulation(cfg, trace=args.trace, full_checks=args.check)
    metrics = sim.run()
    write_outputs(sim, metrics, args.out)
    log.info("%d events, %d migrations", metrics.events_processed, metrics.total_migrations)
    return 0


def cmd_sweep(args) -> int:
    base = ScenarioConfig.load(args.config)
    key, values = parse_vary(args.vary)
    configs, keys = [], []
    for v in values:
        point = base.set_key(key, v)
        for seed in range(args.seeds):
            configs.append(point.replace(seed=seed))
            keys.append((json.dumps(v), seed))
    runs = run_many(configs, args.workers, args.check)
    points = []
    for v in values:
        tag = json.dumps(v)
        rs = [m for (k, _), m in sorted(zip(keys, runs), key=lambda kr: kr[0]) if k == tag]
        points.append({"value": v, "summary": aggregate(rs)})
    _dump_json({"key": key, "seeds": args.seeds, "points": points}, Path(args.out) / "aggregate.json")
    return 0


def cmd_compare(args) -> int:
    names = [s.strip() for s in args.schedulers.split(",") if s.strip()]
    for n in names:
        if n not in SCHEDULER_NAMES:
            raise ConfigError(f"unknown scheduler {n!r}; choose from {', '.join(SCHEDULER_NAMES)}")
    cfg = ScenarioConfig.load(args.config)
    results = compare_schedulers(cfg, names, list(range(args.seeds)), args.workers, args.check)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summaries = {n: aggregate(rs) for n, rs in results.items()}
    with open(out / "migrations_by_scheduler.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour", *names])
        for h in range(24):
            w.writerow([h, *(f"{summaries[n]['migrations_per_hour']['mean'][h]:.3f}" for n in names)])
    totals = {n: [rs_m.total_migrations for rs_m in rs] for n, rs in results.items()}
    _dump_json({"schedulers": names, "seeds": args.seeds, "totals": totals, "summary": summaries},
               out / "aggregate.json")
    return 0


def cmd_preprocess_parking(args) -> int:
    trace = ingest_parking_csv(args.input)
    profile, model = derive_profiles(trace, args.bin_minutes)
    _dump_json(
        {"vehicle_rates": profile.to_list(), "residency": model.to_dict(),
         "rows": len(trace), "skipped": trace.malformed},
        args.out,
    )
    return 0


def cmd_preprocess_users(args) -> int:
    profile = ingest_user_csv(args.input)
    _dump_json({"user_rates": profile.to_list()}, args.out)
    return 0


def cmd_gen_traces(args) -> int:
    try:
        d = json.loads(Path(args.profile).read_text())
        profile = HourlyProfile(tuple(d["vehicle_rates"]))
        model = ResidencyModel.from_dict(d["residency"])
    except (KeyError, TypeError) as e:
        raise ConfigError(f"{args.profile}: not a parking profile ({e})") from e
    if args.days <= 0:
        raise ConfigError("--days must be positive")
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_parking_csv(synth_parking_rows(profile, model, args.days, args.seed), args.out)
    return 0


def cmd_calibrate(args) -> int:
    targets = CalibrationTargets(solo_join_ms=args.join_ms, release_ms=args.release_ms)
    model = calibrate_latency(targets)
    _dump_json(model.to_dict(), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vecsim", description="Vehicular MEC cloud simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run one scenario")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--trace", action="store_true", help="also write events.csv")
    s.add_argument("--check", action="store_true", help="verify invariants after every event")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="grid over one config key, several seeds per point")
    s.add_argument("--config", required=True)
    s.add_argument("--seeds", type=int, default=10)
    s.add_argument("--vary", required=True, metavar="KEY=V1,V2,...")
    s.add_argument("--workers", type=int)
    s.add_argument("--check", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("compare-schedulers", help="hourly migrations per scheduler")
    s.add_argument("--config", required=True)
    s.add_argument("--schedulers", default=",".join(SCHEDULER_NAMES))
    s.add_argument("--seeds", type=int, default=10)
    s.add_argument("--workers", type=int)
    s.add_argument("--check", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("preprocess-parking", help="parking transactions CSV -> profile JSON")
    s.add_argument("--input", required=True)
    s.add_argument("--bin-minutes", type=int, default=10)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_preprocess_parking)

    s = sub.add_parser("preprocess-users", help="hourly session CSV -> profile JSON")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_preprocess_users)

    s = sub.add_parser("gen-traces", help="synthetic parking transactions from a profile")
    s.add_argument("--profile", required=True)
    s.add_argument("--days", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_traces)

    s = sub.add_parser("calibrate", help="fit a latency model to join/release timing targets")
    s.add_argument("--join-ms", type=float, default=13.0)
    s.add_argument("--release-ms", type=float, default=7.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return 0 if not e.code else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InvariantViolation as e:
        print(f"invariant violated: {e}", file=sys.stderr)
        return 2
    except (ConfigError, TraceError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
