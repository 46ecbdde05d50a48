import json
import math
from datetime import datetime, timedelta

import numpy as np
import pytest

from vecsim.kernel import US_PER_DAY, US_PER_HOUR, US_PER_S, ConfigError
from vecsim.scheduling import ResidencyBin, ResidencyModel
from vecsim.workload import (
    DurationDist,
    HourlyProfile,
    ParkingTrace,
    ScenarioConfig,
    TraceError,
    VectorChoice,
    bundled_config,
    derive_profiles,
    gen_user_process,
    gen_vehicle_process,
    ingest_parking_csv,
    ingest_user_csv,
    poisson_arrivals,
    synth_parking_rows,
    truncated_gaussian,
    write_parking_csv,
)

from stats import spearman, within_sigma


def const_model(mean_s, std_s=0.0):
    return ResidencyModel(10, [ResidencyBin(mean_s, std_s, 1)] * 144)


def one_hour(rate):
    rates = [0.0] * 24
    rates[0] = rate
    return HourlyProfile(tuple(rates))


def test_profile_validation():
    with pytest.raises(ValueError):
        HourlyProfile((1.0,) * 23)
    with pytest.raises(ValueError):
        HourlyProfile((-1.0,) + (0.0,) * 23)


def test_zero_rate_is_empty():
    rng = np.random.default_rng(0)
    assert list(gen_vehicle_process(HourlyProfile.constant(0), const_model(3600), rng)) == []
    assert list(gen_user_process(HourlyProfile.constant(0), DurationDist(), rng)) == []


def test_vehicle_count_matches_poisson_mean():
    counts = [len(list(gen_vehicle_process(one_hour(60), const_model(3600), np.random.default_rng(s))))
              for s in range(100)]
    assert within_sigma(np.mean(counts), 60, math.sqrt(60) / math.sqrt(100))


def test_degenerate_residency():
    stays = {va.residency for va in gen_vehicle_process(one_hour(50), const_model(3600), np.random.default_rng(1))}
    assert stays == {3600 * US_PER_S}


def test_arrivals_sorted_and_in_window():
    ts = poisson_arrivals(HourlyProfile.constant(30), np.random.default_rng(2), 5 * US_PER_HOUR, start=US_PER_HOUR // 2)
    assert ts == sorted(ts)
    assert all(0 <= t < 5 * US_PER_HOUR for t in ts)


def test_time_of_day_offset_selects_hour():
    rates = [0.0] * 24
    rates[23] = 100
    ts = poisson_arrivals(HourlyProfile(tuple(rates)), np.random.default_rng(0), US_PER_HOUR, start=23 * US_PER_HOUR)
    assert len(ts) > 50


def test_user_total_over_day():
    totals = [len(list(gen_user_process(HourlyProfile.constant(10), DurationDist(), np.random.default_rng(s))))
              for s in range(50)]
    assert within_sigma(np.mean(totals), 240, math.sqrt(240) / math.sqrt(50))


def test_user_histogram_follows_profile():
    rates = [5 + 40 * math.exp(-((h - 13) ** 2) / 18) for h in range(24)]
    hist = np.zeros(24)
    for s in range(30):
        for ua in gen_user_process(HourlyProfile(tuple(rates)), DurationDist(), np.random.default_rng(s)):
            hist[ua.arrival // US_PER_HOUR] += 1
    assert spearman(hist, rates) > 0.9


def test_truncated_gaussian_respects_floor():
    rng = np.random.default_rng(0)
    xs = [truncated_gaussian(rng, 100, 200, 60) for _ in range(500)]
    assert min(xs) >= 60


def test_duration_kinds():
    rng = np.random.default_rng(0)
    assert DurationDist("fixed", 300).sample_s(rng) == 300
    assert DurationDist("exponential", 300, 0, 0).sample_s(rng) >= 0
    with pytest.raises(ConfigError):
        DurationDist("weibull").sample_s(rng)


def test_vector_choice():
    vc = VectorChoice([(1, 1, 1), (2, 2, 2)], [0, 1])
    assert vc.sample(np.random.default_rng(0)).as_tuple() == (2, 2, 2)
    assert VectorChoice.from_dict([4, 2048, 1000]).choices == [(4, 2048, 1000)]


# -- traces ---------------------------------------------------------------------


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_ingest_two_rows(tmp_path):
    p = write(tmp_path, "p.csv", "entry_time,exit_time\n2024-01-01T08:00:00,2024-01-01T09:00:00\n"
                                 "2024-01-01T10:00:00,2024-01-01T12:30:00\n")
    assert len(ingest_parking_csv(p)) == 2


def test_ingest_skips_backwards_row(tmp_path):
    p = write(tmp_path, "p.csv", "entry_time,exit_time\n2024-01-01T08:00:00,2024-01-01T09:00:00\n"
                                 "2024-01-01T10:00:00,2024-01-01T09:00:00\n"
                                 "2024-01-01T11:00:00,2024-01-01T12:00:00\n")
    t = ingest_parking_csv(p)
    assert len(t) == 2 and t.malformed == 1


def test_ingest_mostly_garbage_is_fatal(tmp_path):
    p = write(tmp_path, "p.csv", "entry_time,exit_time\nnope,nope\nx,y\n2024-01-01T08:00:00,2024-01-01T09:00:00\n")
    with pytest.raises(TraceError):
        ingest_parking_csv(p)


def test_ingest_wrong_header(tmp_path):
    with pytest.raises(TraceError):
        ingest_parking_csv(write(tmp_path, "p.csv", "a,b\n1,2\n"))


def test_ingest_missing_file(tmp_path):
    with pytest.raises(TraceError):
        ingest_parking_csv(tmp_path / "absent.csv")


def rows_at(hours, day=datetime(2024, 3, 4), stay=timedelta(hours=1)):
    return [(day + timedelta(hours=h), day + timedelta(hours=h) + stay) for h in hours]


def test_profile_single_hour():
    prof, _ = derive_profiles(ParkingTrace(rows_at([9] * 5)))
    assert prof.rates[9] == 5 and sum(prof.rates) == 5


def test_profile_uniform_is_flat():
    prof, _ = derive_profiles(ParkingTrace(rows_at(list(range(24)) * 2)))
    assert set(prof.rates) == {2.0}


def test_profile_multi_day_counting_oracle():
    rng = np.random.default_rng(5)
    start = datetime(2024, 3, 4)
    rows = []
    for _ in range(400):
        e = start + timedelta(days=int(rng.integers(0, 7)), hours=int(rng.integers(0, 24)), minutes=int(rng.integers(0, 60)))
        rows.append((e, e + timedelta(hours=2)))
    days = (max(e for e, _ in rows).date() - min(e for e, _ in rows).date()).days + 1
    expected = [sum(1 for e, _ in rows if e.hour == h) / days for h in range(24)]
    prof, _ = derive_profiles(ParkingTrace(rows))
    assert prof.rates == pytest.approx(expected)


def test_round_trip_recovers_generator(tmp_path):
    rates = [8 + 30 * math.exp(-((h - 12) ** 2) / 20) for h in range(24)]
    means = [3600 * (2 + 4 * math.sin(math.pi * b / 144) ** 2) for b in range(144)]
    model = ResidencyModel(10, [ResidencyBin(m, 0.3 * m, 1) for m in means])
    days = 30
    rows = synth_parking_rows(HourlyProfile(tuple(rates)), model, days, seed=11)
    assert len(rows) > 10_000
    write_parking_csv(rows, tmp_path / "synth.csv")
    prof, recovered = derive_profiles(ingest_parking_csv(tmp_path / "synth.csv"))
    for h in range(24):
        assert within_sigma(prof.rates[h], rates[h], math.sqrt(rates[h] / days))
    # pool bins by hour so each check has enough samples
    for h in range(24):
        bins = recovered.bins[h * 6:(h + 1) * 6]
        n = sum(b.n for b in bins)
        mean = sum(b.mean_s * b.n for b in bins) / n
        second = sum(b.n * (b.std_s ** 2 + b.mean_s ** 2) for b in bins) / n
        se = math.sqrt(second - mean ** 2) / math.sqrt(n)
        # arrivals are uniform within the hour, so every bin is equally likely
        truth = np.mean(means[h * 6:(h + 1) * 6])
        assert within_sigma(mean, truth, se)


def test_user_csv(tmp_path):
    p = write(tmp_path, "u.csv", "hour,avg_sessions\n0,5\n13,42.5\n")
    prof = ingest_user_csv(p)
    assert prof.rates[13] == 42.5 and prof.rates[1] == 0
    with pytest.raises(TraceError):
        ingest_user_csv(write(tmp_path, "bad.csv", "hour,avg_sessions\n25,1\n"))


# -- config ---------------------------------------------------------------------


def test_config_round_trip(tmp_path):
    cfg = bundled_config()
    cfg.replace(seed=9).save(tmp_path / "c.json")
    back = ScenarioConfig.load(tmp_path / "c.json")
    assert back.to_dict() == cfg.replace(seed=9).to_dict()
    # bundled profile names still resolve from another directory
    assert len(back.load_vehicle_profile().rates) == 24


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({"seeed": 1})


def test_set_key():
    cfg = ScenarioConfig()
    assert cfg.set_key("session.mean_s", 60).session["mean_s"] == 60
    assert cfg.set_key("user_rate_scale", 2).user_rate_scale == 2
    with pytest.raises(ConfigError):
        cfg.set_key("nonsense", 1)


def test_inline_profiles():
    cfg = ScenarioConfig(user_profile=[1] * 24, user_rate_scale=3)
    assert cfg.load_user_profile().rates == (3.0,) * 24


def test_bundled_profiles_load():
    cfg = bundled_config()
    assert cfg.load_residency().bin_minutes == 10
    assert json.loads(cfg.dumps())["scheduler"] == "round-robin"
