import json
import random
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from mstpath.errors import EmptyCoverage, ParseError, StationOutsideCoverage, UnknownStation, ValidationError
from mstpath.request import (
    Operation,
    Partial,
    Role,
    SensorReading,
    UserRequest,
    choose_root,
    combine,
    parse_latencies,
    parse_readings,
    parse_request,
    path_latency_ms,
    plan_request,
    simulate_collection,
    verify_rate,
)
from mstpath.topology import load_topology
from topogen import make_topology, random_topology

SAMPLES = Path(__file__).resolve().parent.parent / "samples"


@pytest.fixture(scope="module")
def seoul():
    return load_topology("seoul-topo")


def R(station, value, ts, dtype="temperature"):
    return SensorReading(station, dtype, value, ts)


# -- combine -------------------------------------------------------------


def test_combine_identity_and_example():
    assert combine(Partial(), Partial(4, 2)) == Partial(4, 2)
    got = combine(Partial(3.5, 1), Partial(6.5, 1))
    assert got == Partial(10.0, 2) and got.sum / got.count == 5.0


partials = st.builds(Partial, st.integers(-10**6, 10**6), st.integers(0, 50))


@given(a=partials, b=partials, c=partials)
def test_combine_associative_commutative(a, b, c):
    assert combine(a, b) == combine(b, a)
    assert combine(combine(a, b), c) == combine(a, combine(b, c))


# -- planning ------------------------------------------------------------


def test_request_invariants():
    with pytest.raises(EmptyCoverage):
        UserRequest(())
    with pytest.raises(ValidationError):
        UserRequest(("h1",), rate_hz=0)
    with pytest.raises(ValidationError):
        UserRequest(("h1",), jitter_bound_ms=-1)


def test_single_station_plan(line3):
    plan = plan_request(line3, UserRequest(("h3",)))
    assert plan.root == "s3"
    assert plan.agg.roles == {"h3": Role.LEAF, "s3": Role.ROOT}


def test_star_picks_hub():
    t = make_topology([("hub", "a"), ("hub", "b"), ("hub", "c")], {"h1": "a", "h2": "b", "h3": "c"})
    plan = plan_request(t, UserRequest(("h1", "h2", "h3")))
    assert plan.root == "hub"
    assert plan.agg.roles["a"] is Role.COMBINER
    assert plan.agg.children["hub"] == ("a", "b", "c")


def test_root_hint_wins(line3):
    plan = plan_request(line3, UserRequest(("h1", "h3"), root_hint="s1"))
    assert plan.root == "s1"
    assert plan.agg.roles["s2"] is Role.COMBINER and plan.agg.roles["s3"] is Role.COMBINER


def test_seoul_group_plan(seoul):
    plan = plan_request(seoul, UserRequest("seoul"))
    assert plan.stations == ("h2", "h3", "h4")
    # hop sums: s1 -> 3+2+3, s2 -> 2+3+4, s3 -> 3+1+2, s4 -> 4+2+1
    assert plan.root == "s3"
    assert sorted(map(sorted, plan.summary()["tree_edges"])) == [["s1", "s2"], ["s1", "s3"], ["s3", "s4"]]
    assert choose_root(seoul, ["h1"]) == "s1"


def test_unknown_coverage(seoul):
    with pytest.raises(UnknownStation):
        plan_request(seoul, UserRequest("tokyo"))
    with pytest.raises(UnknownStation):
        plan_request(seoul, UserRequest(("s1",)))


# -- simulate_collection -------------------------------------------------


def test_two_station_average(line3):
    plan = plan_request(line3, UserRequest(("h1", "h3"), interval_s=10))
    (ep,) = simulate_collection(plan, [R("h1", 10, 1000), R("h3", 20, 1250)])
    assert ep.value == 15.0
    assert ep.arrival_spread_ms == 250
    assert ep.count == 2 and ep.complete


def test_all_zero_latency_simultaneous_spread_zero(seoul):
    plan = plan_request(seoul, UserRequest("seoul"))
    (ep,) = simulate_collection(plan, [R(s, 1, 500) for s in plan.stations])
    assert ep.arrival_spread_ms == 0 and ep.jitter_ok


def seoul_latencies(seoul, far):
    return parse_latencies(json.dumps([
        {"a": "h2", "b": "s2", "latency_ms": 10},
        {"a": "s1", "b": "s2", "latency_ms": 20},
        {"a": "s1", "b": "s3", "latency_ms": 30},
        {"a": ["s3", 4], "b": ["s4", 2], "latency_ms": far},
    ]), seoul)


@pytest.mark.parametrize("far, ok", [(80, True), (120, False)])
def test_seoul_jitter_verdicts(seoul, far, ok):
    plan = plan_request(seoul, UserRequest("seoul", interval_s=10, jitter_bound_ms=100))
    lat = seoul_latencies(seoul, far)
    assert [path_latency_ms(plan, s, lat) for s in plan.stations] == [60, 0, far]
    readings = [R("h2", 10, 0), R("h3", 20, 0), R("h4", 30, 0)]
    (ep,) = simulate_collection(plan, readings, lat)
    assert ep.arrival_spread_ms == far
    assert ep.jitter_ok is ok
    assert ep.value == 20.0


def test_latest_reading_wins_and_missing_reported(line3):
    plan = plan_request(line3, UserRequest(("h1", "h3"), interval_s=1, operation="sum"))
    readings = [R("h1", 1, 100), R("h1", 5, 900), R("h3", 2, 500), R("h1", 7, 2100)]
    e0, e1, e2 = simulate_collection(plan, readings)
    assert (e0.value, e0.count, e0.missing) == (7, 2, [])
    assert (e1.value, e1.count, e1.missing) == (None, 0, ["h1", "h3"])
    assert (e2.value, e2.count, e2.missing) == (7, 1, ["h3"])


def test_operation_none_lists_stations(line3):
    plan = plan_request(line3, UserRequest(("h1", "h3"), operation="none"))
    (ep,) = simulate_collection(plan, [R("h3", 2, 0), R("h1", 1, 0)])
    assert ep.value == [["h1", 1], ["h3", 2]]


def test_other_data_types_ignored(line3):
    plan = plan_request(line3, UserRequest(("h1", "h3")))
    (ep,) = simulate_collection(plan, [R("h1", 10, 0), R("h3", 20, 0), R("h3", 99, 5, "humidity")])
    assert ep.value == 15.0


def test_reading_outside_coverage(line3):
    plan = plan_request(line3, UserRequest(("h1",)))
    with pytest.raises(StationOutsideCoverage):
        simulate_collection(plan, [R("h3", 1, 0)])


def test_five_station_sum():
    t = make_topology([("s1", "s2"), ("s2", "s3"), ("s2", "s4"), ("s4", "s5")], {f"h{i}": f"s{i}" for i in range(1, 6)})
    plan = plan_request(t, UserRequest(tuple(f"h{i}" for i in range(1, 6)), operation="sum"))
    values = [17, -4, 250, 3, 91]
    (ep,) = simulate_collection(plan, [R(f"h{i}", v, 0) for i, v in enumerate(values, 1)])
    assert ep.value == sum(values) == 357


@settings(max_examples=120, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 8), hosts=st.integers(1, 8), extra=st.integers(0, 6))
def test_fold_matches_flat_oracle(seed, n, hosts, extra):
    rng = random.Random(seed)
    t = random_topology(rng, n, hosts, extra)
    cover = tuple(rng.sample(t.hosts(), rng.randint(1, len(t.hosts()))))
    ints = [rng.randint(-1000, 1000) for _ in cover]
    plan = plan_request(t, UserRequest(cover, operation="sum"))
    (ep,) = simulate_collection(plan, [R(s, v, 0) for s, v in zip(cover, ints)])
    assert ep.value == sum(ints) and ep.count == len(cover)
    reals = [rng.uniform(-50, 50) for _ in cover]
    plan = plan_request(t, UserRequest(cover, operation="average"))
    (ep,) = simulate_collection(plan, [R(s, v, 0) for s, v in zip(cover, reals)])
    flat = sum(reals) / len(reals)
    assert abs(ep.value - flat) <= 1e-9 * max(1.0, abs(flat))


# -- verify_rate ---------------------------------------------------------


def test_rate_exact(line3):
    plan = plan_request(line3, UserRequest(("h1",), rate_hz=1, interval_s=10))
    (r,) = verify_rate(plan, [R("h1", 0, ms) for ms in range(0, 10000, 1000)])
    assert (r.readings, r.observed_hz, r.flagged) == (10, 1.0, False)


def test_rate_silent_station(line3):
    plan = plan_request(line3, UserRequest(("h1", "h3"), rate_hz=1, interval_s=10))
    rates = {r.station: r for r in verify_rate(plan, [R("h1", 0, ms) for ms in range(0, 10000, 1000)])}
    assert rates["h3"].observed_hz == 0 and rates["h3"].flagged
    assert not rates["h1"].flagged


def test_rate_bursty_within_tolerance(line3):
    # 19 readings in the first second of each 10 s epoch, 2 epochs: 38 / 20 s = 1.9 Hz vs 2 Hz (5% off)
    plan = plan_request(line3, UserRequest(("h1",), rate_hz=2, interval_s=10))
    readings = [R("h1", 0, base + k * 50) for base in (0, 10000) for k in range(19)]
    (r,) = verify_rate(plan, readings)
    assert r.observed_hz == 1.9 and not r.flagged


def test_rate_bursty_outside_tolerance(line3):
    # 17 per epoch: 1.7 Hz, 15% under
    plan = plan_request(line3, UserRequest(("h1",), rate_hz=2, interval_s=10))
    readings = [R("h1", 0, base + k * 50) for base in (0, 10000) for k in range(17)]
    (r,) = verify_rate(plan, readings)
    assert r.observed_hz == 1.7 and r.flagged
    (r,) = verify_rate(plan, readings, tolerance=0.2)
    assert not r.flagged


# -- file formats --------------------------------------------------------


def test_parse_sample_request():
    req = parse_request((SAMPLES / "seoul-request.json").read_text())
    assert req.coverage == "seoul"
    assert req.rate_hz == Fraction(1, 10) and req.interval_s == 10 and req.jitter_bound_ms == 100
    assert req.operation is Operation.AVERAGE


@pytest.mark.parametrize("text", ["[", "[]", '{"rate_hz": 1}', '{"coverage": 3}', '{"coverage": "g", "operation": "max"}',
                                  '{"coverage": "g", "rate_hz": "x"}'])
def test_parse_request_errors(text):
    with pytest.raises(ParseError):
        parse_request(text)


def test_parse_readings():
    rows = parse_readings("station,data_type,value,timestamp_ms\n# note\nh1,temperature,21.5,100\n\nh2,temperature,-3,200\n")
    assert rows == [R("h1", 21.5, 100), R("h2", -3, 200)]
    assert isinstance(rows[1].value, int)


@pytest.mark.parametrize("text", ["h1,temperature,1\n", "h1,temperature,x,1\n", "h1,temperature,1,-5\n", "h1,t,1,2.5\n"])
def test_parse_readings_errors(text):
    with pytest.raises(ParseError):
        parse_readings(text)


def test_parse_latencies_rejects_non_links(seoul):
    with pytest.raises(ParseError):
        parse_latencies('[{"a": "h1", "b": "s4", "latency_ms": 5}]', seoul)
    with pytest.raises(ParseError):
        parse_latencies('[{"a": ["s1", 2], "b": ["s3", 2], "latency_ms": 5}]', seoul)
    with pytest.raises(ParseError):
        parse_latencies('[{"a": "s1", "b": "s2", "latency_ms": -1}]', seoul)
