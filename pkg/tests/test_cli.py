import csv
import json

import pytest

from vecsim.cli import main, parse_vary
from vecsim.kernel import ConfigError
from vecsim.metrics import RunMetrics
from vecsim.workload import DATA_DIR, bundled_config

DEMO = str(DATA_DIR / "demo.json")


@pytest.fixture
def short_config(tmp_path):
    cfg = bundled_config().replace(horizon_s=3 * 3600, warmup_s=1800)
    path = tmp_path / "short.json"
    cfg.save(path)
    return str(path)


def test_simulate_writes_all_fields(tmp_path, short_config):
    out = tmp_path / "run"
    assert main(["simulate", "--config", short_config, "--seed", "3", "--trace", "--out", str(out)]) == 0
    d = json.loads((out / "metrics.json").read_text())
    for name in ("join_times", "release_times", "allocation_delays", "migrations_per_hour",
                 "rejected_requests", "service_gaps", "occupancy"):
        assert name in d
    assert RunMetrics.from_dict(d).to_dict() == d
    header = (out / "events.csv").read_text().splitlines()[0]
    assert header == "time_us,seq,kind,source,target,detail"
    assert (out / "migrations_per_hour.csv").read_text().startswith("hour,count\n0,")


def test_simulate_without_trace_has_no_events_file(tmp_path, short_config):
    assert main(["simulate", "--config", short_config, "--out", str(tmp_path)]) == 0
    assert not (tmp_path / "events.csv").exists()


def test_compare_schedulers_table(tmp_path, short_config):
    out = tmp_path / "cmp"
    rc = main(["compare-schedulers", "--config", short_config, "--schedulers", "best-first,round-robin,residency",
               "--seeds", "2", "--workers", "1", "--out", str(out)])
    assert rc == 0
    rows = list(csv.reader((out / "migrations_by_scheduler.csv").open()))
    assert rows[0] == ["hour", "best-first", "round-robin", "residency"]
    assert len(rows) == 25 and all(len(r) == 4 for r in rows)


def test_sweep(tmp_path, short_config):
    rc = main(["sweep", "--config", short_config, "--seeds", "2", "--workers", "1",
               "--vary", "user_rate_scale=0.5,1", "--out", str(tmp_path)])
    assert rc == 0
    agg = json.loads((tmp_path / "aggregate.json").read_text())
    assert [p["value"] for p in agg["points"]] == [0.5, 1]
    assert all(p["summary"]["runs"] == 2 for p in agg["points"])


def test_parse_vary():
    assert parse_vary("session.mean_s=60,120") == ("session.mean_s", [60, 120])
    assert parse_vary("scheduler=best-first") == ("scheduler", ["best-first"])
    with pytest.raises(ConfigError):
        parse_vary("novalue")


def test_trace_tools_round_trip(tmp_path):
    csv_path, prof_path = tmp_path / "p.csv", tmp_path / "p.json"
    assert main(["gen-traces", "--profile", str(DATA_DIR / "parking_profile.json"), "--days", "3",
                 "--out", str(csv_path)]) == 0
    assert main(["preprocess-parking", "--input", str(csv_path), "--bin-minutes", "10", "--out", str(prof_path)]) == 0
    d = json.loads(prof_path.read_text())
    assert len(d["vehicle_rates"]) == 24 and len(d["residency"]["bins"]) == 144
    users = tmp_path / "u.json"
    assert main(["preprocess-users", "--input", str(DATA_DIR / "user_activity.csv"), "--out", str(users)]) == 0
    assert len(json.loads(users.read_text())["user_rates"]) == 24


def test_unknown_flag_exits_one_with_usage(capsys):
    assert main(["simulate", "--config", DEMO, "--out", "x", "--frobnicate"]) == 1
    assert "usage:" in capsys.readouterr().err


def test_missing_config_exits_one(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 1


def test_bad_config_key_exits_one(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"horizon": 5}))
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path)]) == 1


def test_unknown_scheduler_exits_one(tmp_path):
    assert main(["compare-schedulers", "--config", DEMO, "--schedulers", "lottery", "--out", str(tmp_path)]) == 1


def test_invariant_violation_exits_two(tmp_path, short_config, monkeypatch):
    from vecsim import orchestration

    def broken(self, app, v):
        v.allocated = v.allocated + app.demand + app.demand
        v.hosted_apps[app.id] = None
        app.placement = orchestration.Placement.remote(v.id)

    monkeypatch.setattr(orchestration.Vim, "reserve_remote", broken)
    assert main(["simulate", "--config", short_config, "--check", "--out", str(tmp_path)]) == 2


def test_help_exits_zero():
    assert main(["--help"]) == 0
