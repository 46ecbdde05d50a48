from datetime import datetime, timedelta

import pytest
from hypothesis import given, strategies as st

from vecsim.kernel import US_PER_S
from vecsim.model import Placement, ResourceVector
from vecsim.scheduling import (
    BestFirst,
    PoolSnapshot,
    ResidencyBin,
    ResidencyModel,
    ResidencyPredictive,
    RoundRobin,
    VehicleSlot,
    build_residency_model,
    make_scheduler,
    predict_remaining,
    residency_choice,
)

from oracles import RefRoundRobin, ref_best_first, ref_residency

D2 = ResourceVector(2, 256, 50)


def slot(vid, cpu, join=0, ram=4096, disk=1000):
    return VehicleSlot(vid, ResourceVector(cpu, ram, disk), join)


def snap(*vehicles, now=0):
    return PoolSnapshot(tuple(vehicles), ResourceVector(), now)


def flat_model(mean_s=3600.0, bin_minutes=10):
    return ResidencyModel(bin_minutes, [ResidencyBin(mean_s, 0.0, 1)] * (1440 // bin_minutes))


class TestBestFirst:
    def test_first_fit(self):
        assert BestFirst().decide(snap(slot("v1", 4), slot("v2", 8)), D2, 0) == Placement.remote("v1")

    def test_skips_full(self):
        assert BestFirst().decide(snap(slot("v1", 0), slot("v2", 8)), D2, 0) == Placement.remote("v2")

    def test_none_fits(self):
        assert BestFirst().decide(snap(slot("v1", 1)), D2, 0) is None


class TestRoundRobin:
    def test_cycle_and_wrap(self):
        rr = RoundRobin()
        s = snap(slot("v1", 8), slot("v2", 8), slot("v3", 8))
        assert [rr.decide(s, D2, 0).vehicle_id for _ in range(4)] == ["v1", "v2", "v3", "v1"]

    def test_even_spread(self):
        rr = RoundRobin()
        free = {f"v{i}": 100 for i in range(4)}
        counts = dict.fromkeys(free, 0)
        for _ in range(100):
            s = snap(*(slot(k, c) for k, c in free.items()))
            vid = rr.decide(s, ResourceVector(1, 0, 0), 0).vehicle_id
            free[vid] -= 1
            counts[vid] += 1
        assert set(counts.values()) == {25}

    def test_resumes_after_departed_vehicle(self):
        rr = RoundRobin()
        rr.decide(snap(slot("v1", 8), slot("v2", 8), slot("v3", 8)), D2, 0)
        rr.decide(snap(slot("v1", 8), slot("v2", 8), slot("v3", 8)), D2, 0)
        # v2 (last chosen) left; v3 slid into its position and is next
        assert rr.decide(snap(slot("v1", 8), slot("v3", 8)), D2, 0).vehicle_id == "v3"


class TestResidency:
    def test_predict_remaining(self):
        m = flat_model(3600)
        assert predict_remaining(m, 0, 1800 * US_PER_S) == 1800 * US_PER_S
        assert predict_remaining(m, 0, 5000 * US_PER_S) == 0

    def test_argmax(self):
        m = ResidencyModel(60, [ResidencyBin(3600.0, 0, 1)] + [ResidencyBin(7200.0, 0, 1)] * 23)
        hour = 3600 * US_PER_S
        now = 2 * hour
        # v1 joined at 00:00 (1 h stay, overdue), v2 at 01:00 (2 h stay, 1 h left)
        s = snap(slot("v1", 8, join=0), slot("v2", 8, join=hour), now=now)
        assert residency_choice(s, D2, now, m) == Placement.remote("v2")

    def test_tie_breaks_on_earlier_join(self):
        m = flat_model(1.0)
        # both overdue, so remaining is 0 for each
        s = snap(slot("late", 8, join=600 * US_PER_S), slot("early", 8, join=0))
        assert residency_choice(s, D2, 700 * US_PER_S, m) == Placement.remote("early")

    def test_full_tie_breaks_on_id(self):
        s = snap(slot("b", 8, join=0), slot("a", 8, join=0))
        assert residency_choice(s, D2, 0, flat_model()) == Placement.remote("a")

    def test_capacity_gates_prediction_ranks(self):
        m = ResidencyModel(60, [ResidencyBin(600.0, 0, 1)] + [ResidencyBin(36000.0, 0, 1)] * 23)
        s = snap(slot("short", 8, join=0), slot("long", 1, join=3600 * US_PER_S), now=3600 * US_PER_S)
        assert residency_choice(s, D2, 3600 * US_PER_S, m) == Placement.remote("short")

    def test_clock_offset_shifts_bins(self):
        hour = 3600 * US_PER_S
        m = ResidencyModel(60, [ResidencyBin(36000.0, 0, 1)] + [ResidencyBin(600.0, 0, 1)] * 23)
        s = snap(slot("a", 8, join=0), slot("b", 8, join=hour), now=hour)
        assert ResidencyPredictive(m, 0).decide(s, D2, hour).vehicle_id == "a"
        # started at 23:00: a entered at 23:00 (short stay), b at midnight (long)
        assert ResidencyPredictive(m, 23 * hour).decide(s, D2, hour).vehicle_id == "b"


class TestBuildResidencyModel:
    def test_single_row(self):
        m, skipped = build_residency_model([(datetime(2024, 1, 1, 8), datetime(2024, 1, 1, 10))])
        assert skipped == 0
        assert m.bins[48].mean_s == 7200 and m.bins[48].std_s == 0 and m.bins[48].n == 1

    def test_population_std(self):
        t = datetime(2024, 1, 1, 8, 5)
        m, _ = build_residency_model([(t, t + timedelta(hours=1)), (t, t + timedelta(hours=3))])
        assert m.bins[48].mean_s == 7200
        assert m.bins[48].std_s == pytest.approx(3600)

    def test_empty_bins_get_global_mean(self):
        t = datetime(2024, 1, 1, 8)
        rows = [(t, t + timedelta(hours=1)), (t + timedelta(hours=5), t + timedelta(hours=8))]
        m, _ = build_residency_model(rows)
        assert m.bins[0].mean_s == pytest.approx(7200) and m.bins[0].n == 0
        assert m.global_mean() == pytest.approx(7200)

    def test_malformed_rows_skipped(self):
        t = datetime(2024, 1, 1, 8)
        m, skipped = build_residency_model([(t, t - timedelta(hours=1)), (t, None), (t, t + timedelta(hours=1))])
        assert skipped == 2
        assert m.bins[48].n == 1

    def test_json_round_trip(self, tmp_path):
        m = flat_model(1234.5)
        m.save(tmp_path / "r.json")
        assert ResidencyModel.load(tmp_path / "r.json") == m


def test_make_scheduler():
    assert make_scheduler("best-first").name == "best-first"
    assert make_scheduler("residency", flat_model()).name == "residency"
    with pytest.raises(ValueError):
        make_scheduler("random")
    with pytest.raises(ValueError):
        make_scheduler("residency")


# -- properties ------------------------------------------------------------------

vehicles_st = st.lists(
    st.tuples(st.integers(0, 4), st.integers(0, 2048), st.integers(0, 400), st.integers(0, 10**11)),
    max_size=8,
).map(lambda rows: [VehicleSlot(f"v{i}", ResourceVector(c, r, d), j) for i, (c, r, d, j) in enumerate(rows)])
demand_st = st.builds(ResourceVector, st.integers(0, 3), st.integers(0, 1024), st.integers(0, 200))
model_st = st.lists(st.floats(0, 20_000), min_size=24, max_size=24).map(
    lambda means: ResidencyModel(60, [ResidencyBin(m, 0.0, 1) for m in means])
)


def check_feasible(vehicles, demand, placement):
    fitting = {v.id for v in vehicles if demand <= v.free}
    if placement is None:
        assert not fitting
    else:
        assert placement.vehicle_id in fitting


@given(vehicles_st, demand_st)
def test_best_first_matches_reference(vehicles, demand):
    p = BestFirst().decide(snap(*vehicles), demand, 0)
    check_feasible(vehicles, demand, p)
    assert (None if p is None else p.vehicle_id) == ref_best_first(vehicles, demand)


@given(st.lists(st.tuples(vehicles_st, demand_st), max_size=10))
def test_round_robin_matches_reference_over_sequences(steps):
    rr, ref = RoundRobin(), RefRoundRobin()
    for vehicles, demand in steps:
        p = rr.decide(snap(*vehicles), demand, 0)
        check_feasible(vehicles, demand, p)
        assert (None if p is None else p.vehicle_id) == ref.decide(vehicles, demand)


@given(vehicles_st, demand_st, model_st, st.integers(0, 10**11))
def test_residency_matches_reference(vehicles, demand, model, extra):
    now = max((v.join_time for v in vehicles), default=0) + extra
    p = residency_choice(snap(*vehicles, now=now), demand, now, model)
    check_feasible(vehicles, demand, p)
    assert (None if p is None else p.vehicle_id) == ref_residency(vehicles, demand, now, model)


@given(vehicles_st, demand_st, model_st, st.randoms())
def test_residency_invariant_to_pool_order(vehicles, demand, model, rnd):
    now = max((v.join_time for v in vehicles), default=0)
    shuffled = list(vehicles)
    rnd.shuffle(shuffled)
    assert residency_choice(snap(*vehicles), demand, now, model) == residency_choice(snap(*shuffled), demand, now, model)


@given(st.integers(1, 6), st.integers(1, 60))
def test_round_robin_balance(n, k):
    """Equal vehicles with ample room receive counts differing by at most one."""
    rr = RoundRobin()
    vs = [slot(f"v{i}", 1000) for i in range(n)]
    counts = dict.fromkeys((v.id for v in vs), 0)
    for _ in range(k):
        counts[rr.decide(snap(*vs), ResourceVector(1, 0, 0), 0).vehicle_id] += 1
    assert max(counts.values()) - min(counts.values()) <= 1
