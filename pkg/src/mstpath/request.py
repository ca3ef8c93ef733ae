"""IoT collection requests: plan a datapath, then simulate epoch-wise aggregation.

A request names the base stations to cover, the reading type, the expected
per-station rate, the epoch length, a jitter bound and an aggregate
operation. Planning picks a root, orients the MST there, synthesizes rules
and assigns aggregation roles along the tree. Simulation folds (sum, count)
partials leaf to root and measures arrival spread at the root per epoch.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
import re
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, NamedTuple, Sequence

from .errors import EmptyCoverage, ParseError, StationOutsideCoverage, UnknownStation, ValidationError
from .mst import SpanningTree, compute_mst, orient_tree, tree_path
from .ruleplan import RulePlan, synthesize_rules
from .topology import Link, PortRef, Topology, parse_weight

log = logging.getLogger(__name__)

DEFAULT_RATE_TOLERANCE = 0.10


class Operation(str, enum.Enum):
    NONE = "none"
    SUM = "sum"
    AVERAGE = "average"


@dataclass(frozen=True)
class UserRequest:
    coverage: tuple[str, ...] | str  # host names, or the name of a topology group
    data_type: str = "temperature"
    rate_hz: Fraction = Fraction(1)
    interval_s: Fraction = Fraction(10)
    jitter_bound_ms: Fraction = Fraction(100)
    operation: Operation = Operation.AVERAGE
    root_hint: str | None = None

    def __post_init__(self):
        if isinstance(self.coverage, (list, set, frozenset)):
            object.__setattr__(self, "coverage", tuple(self.coverage))
        for name in ("rate_hz", "interval_s", "jitter_bound_ms"):
            object.__setattr__(self, name, Fraction(getattr(self, name)))
        object.__setattr__(self, "operation", Operation(self.operation))
        if self.rate_hz <= 0:
            raise ValidationError("rate_hz must be positive")
        if self.interval_s <= 0:
            raise ValidationError("interval_s must be positive")
        if self.jitter_bound_ms < 0:
            raise ValidationError("jitter_bound_ms must be nonnegative")
        if not self.coverage:
            raise EmptyCoverage("coverage is empty")


@dataclass(frozen=True)
class SensorReading:
    station: str
    data_type: str
    value: float
    timestamp_ms: int


class Partial(NamedTuple):
    sum: float = 0
    count: int = 0


def combine(a: tuple, b: tuple) -> Partial:
    return Partial(a[0] + b[0], a[1] + b[1])


class Role(str, enum.Enum):
    LEAF = "Leaf"
    COMBINER = "Combiner"
    ROOT = "Root"


@dataclass(frozen=True)
class AggregationPlan:
    roles: Mapping[str, Role]
    children: Mapping[str, tuple[str, ...]]  # restricted to nodes that hold a role

    def leaves(self) -> list[str]:
        return sorted(n for n, r in self.roles.items() if r is Role.LEAF)

    def fold(self, node: str, own: Mapping[str, Partial]) -> Partial:
        acc = own.get(node, Partial())
        for c in self.children.get(node, ()):
            acc = combine(acc, self.fold(c, own))
        return acc


@dataclass(frozen=True)
class DatapathPlan:
    request: UserRequest
    topology: Topology
    stations: tuple[str, ...]
    root: str
    tree: SpanningTree
    rules: RulePlan
    agg: AggregationPlan

    def summary(self) -> dict:
        edges = [sorted(l.nodes) for l in self.tree.edges]
        return {
            "root": self.root,
            "stations": list(self.stations),
            "tree_edges": edges,
            "roles": {n: r.value for n, r in sorted(self.agg.roles.items())},
        }


def resolve_coverage(t: Topology, req: UserRequest) -> tuple[str, ...]:
    if isinstance(req.coverage, str):
        if req.coverage not in t.groups:
            raise UnknownStation(f"unknown coverage group {req.coverage!r}")
        stations = t.groups[req.coverage]
    else:
        stations = req.coverage
    if not stations:
        raise EmptyCoverage("coverage is empty")
    for s in stations:
        if s not in t.nodes or not t.nodes[s].is_host:
            raise UnknownStation(f"unknown station {s!r}")
    return tuple(sorted(set(stations)))


def choose_root(t: Topology, stations: Iterable[str]) -> str:
    """Switch minimizing summed tree hop counts from the stations; ties by name.

    Each candidate is scored on the tree it would itself be the root of.
    """
    stations = list(stations)
    best, best_cost = None, None
    for sw in t.switches():
        tree = orient_tree(t, compute_mst(t, sw), sw)
        cost = sum(len(tree_path(tree, s, sw)) - 1 for s in stations)
        if best_cost is None or cost < best_cost:
            best, best_cost = sw, cost
    return best


def assign_roles(tree: SpanningTree, stations: Iterable[str]) -> AggregationPlan:
    roles: dict[str, Role] = {}
    children: dict[str, set[str]] = defaultdict(set)
    for s in stations:
        chain = tree.ancestors(s)
        for child, parent in zip(chain, chain[1:]):
            children[parent].add(child)
        for n in chain[1:-1]:
            roles.setdefault(n, Role.COMBINER)
    for s in stations:
        roles[s] = Role.LEAF
    roles[tree.root] = Role.ROOT
    return AggregationPlan(roles, {n: tuple(sorted(c)) for n, c in sorted(children.items())})


def plan_request(t: Topology, req: UserRequest) -> DatapathPlan:
    stations = resolve_coverage(t, req)
    root = req.root_hint if req.root_hint is not None else choose_root(t, stations)
    tree = orient_tree(t, compute_mst(t, root), root)
    return DatapathPlan(req, t, stations, tree.root, tree, synthesize_rules(t, tree), assign_roles(tree, stations))


# -- simulation ----------------------------------------------------------


def _latency(latencies: Mapping, link: Link):
    if link in latencies:
        return latencies[link]
    return latencies.get(frozenset(link.nodes), 0)


def path_latency_ms(plan: DatapathPlan, station: str, latencies: Mapping) -> float:
    total = 0
    chain = plan.tree.ancestors(station)
    for child in chain[:-1]:
        link = plan.topology.link_at(PortRef(child, plan.tree.parent[child].egress_port))
        total += _latency(latencies, link)
    return total


@dataclass
class EpochResult:
    epoch_index: int
    value: float | list | None
    arrival_spread_ms: float
    jitter_ok: bool
    count: int
    missing: list[str] = field(default_factory=list)
    arrivals_ms: dict[str, float] = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return not self.missing

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch_index,
            "value": self.value,
            "count": self.count,
            "arrival_spread_ms": self.arrival_spread_ms,
            "jitter_ok": self.jitter_ok,
            "missing": self.missing,
            "arrivals_ms": self.arrivals_ms,
        }


def _num(x):
    """Collapse exact rationals to int or float for reporting."""
    if isinstance(x, Fraction):
        return int(x) if x.denominator == 1 else float(x)
    return x


def _epoch_of(ts_ms: int, interval_ms: Fraction) -> int:
    return math.floor(Fraction(ts_ms) / interval_ms)


def _relevant(plan: DatapathPlan, readings: Iterable[SensorReading]) -> list[SensorReading]:
    out = []
    cover = set(plan.stations)
    skipped = 0
    for r in readings:
        if r.station not in cover:
            raise StationOutsideCoverage(f"reading from {r.station!r}, which is outside the coverage")
        if r.data_type != plan.request.data_type:
            skipped += 1
            continue
        out.append(r)
    if skipped:
        log.info("ignored %d readings of a different data type", skipped)
    return out


def simulate_collection(
    plan: DatapathPlan,
    readings: Sequence[SensorReading],
    link_latency_ms: Mapping | None = None,
) -> list[EpochResult]:
    """Evaluate every epoch between the first and last reading.

    The latest reading per station in an epoch counts. A station with no
    reading in an epoch is listed in ``missing`` and the aggregate covers the
    stations that did report.
    """
    latencies = link_latency_ms or {}
    req = plan.request
    interval_ms = req.interval_s * 1000
    readings = _relevant(plan, readings)
    if not readings:
        return []

    latest: dict[int, dict[str, SensorReading]] = defaultdict(dict)
    for r in readings:
        slot = latest[_epoch_of(r.timestamp_ms, interval_ms)]
        prev = slot.get(r.station)
        if prev is None or r.timestamp_ms >= prev.timestamp_ms:
            slot[r.station] = r

    delay = {s: path_latency_ms(plan, s, latencies) for s in plan.stations}
    results = []
    for epoch in range(min(latest), max(latest) + 1):
        got = latest.get(epoch, {})
        own = {s: Partial(r.value, 1) for s, r in got.items()}
        arrivals = {s: _num(r.timestamp_ms + delay[s]) for s, r in sorted(got.items())}
        spread = _num(max(arrivals.values()) - min(arrivals.values())) if arrivals else 0
        root_partial = plan.agg.fold(plan.root, own)
        if req.operation is Operation.SUM:
            value = root_partial.sum if root_partial.count else None
        elif req.operation is Operation.AVERAGE:
            value = root_partial.sum / root_partial.count if root_partial.count else None
        else:
            value = [[s, got[s].value] for s in sorted(got)]
        missing = [s for s in plan.stations if s not in got]
        if missing:
            log.info("epoch %d: no reading from %s", epoch, ", ".join(missing))
        results.append(EpochResult(epoch, value, spread, spread <= req.jitter_bound_ms, root_partial.count, missing, arrivals))
    return results


@dataclass(frozen=True)
class StationRate:
    station: str
    readings: int
    observed_hz: float
    expected_hz: float
    flagged: bool

    def to_dict(self) -> dict:
        return {
            "station": self.station,
            "readings": self.readings,
            "observed_hz": self.observed_hz,
            "expected_hz": self.expected_hz,
            "flagged": self.flagged,
        }


def verify_rate(
    plan: DatapathPlan,
    readings: Sequence[SensorReading],
    tolerance: float = DEFAULT_RATE_TOLERANCE,
) -> list[StationRate]:
    """Observed readings/second per station over the whole-epoch span of the data."""
    req = plan.request
    interval_ms = req.interval_s * 1000
    readings = _relevant(plan, readings)
    if readings:
        epochs = [_epoch_of(r.timestamp_ms, interval_ms) for r in readings]
        span_s = (max(epochs) - min(epochs) + 1) * req.interval_s
    else:
        span_s = req.interval_s
    counts = defaultdict(int)
    for r in readings:
        counts[r.station] += 1
    out = []
    for s in plan.stations:
        observed = Fraction(counts[s]) / span_s
        flagged = abs(observed - req.rate_hz) > Fraction(tolerance) * req.rate_hz
        out.append(StationRate(s, counts[s], float(observed), float(req.rate_hz), flagged))
    return out


# -- file formats --------------------------------------------------------


def request_from_dict(doc) -> UserRequest:
    if not isinstance(doc, dict):
        raise ParseError("request must be an object")
    if "coverage" not in doc:
        raise ParseError("request: missing 'coverage'")
    cov = doc["coverage"]
    if not (isinstance(cov, str) or (isinstance(cov, list) and all(isinstance(c, str) for c in cov))):
        raise ParseError("request.coverage: expected a group name or a list of hosts")
    kwargs = {"coverage": cov}
    for name in ("rate_hz", "interval_s", "jitter_bound_ms"):
        if name in doc:
            try:
                kwargs[name] = parse_weight(doc[name])
            except ValueError as exc:
                raise ParseError(f"request.{name}: {exc}") from None
    if "data_type" in doc:
        kwargs["data_type"] = str(doc["data_type"])
    if "operation" in doc:
        try:
            kwargs["operation"] = Operation(str(doc["operation"]).lower())
        except ValueError:
            raise ParseError("request.operation: expected none, sum or average") from None
    if doc.get("root_hint") is not None:
        kwargs["root_hint"] = str(doc["root_hint"])
    return UserRequest(**kwargs)


def parse_request(text: str) -> UserRequest:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return request_from_dict(doc)


_INT_RE = re.compile(r"^[+-]?\d+$")


def parse_readings(text: str) -> list[SensorReading]:
    """``station,data_type,value,timestamp_ms`` per line; a header line is optional."""
    out = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        if lineno == 1 and row[0].strip() == "station":
            continue
        if len(row) != 4:
            raise ParseError(f"readings line {lineno}: expected 4 fields, got {len(row)}")
        station, dtype, raw_value, raw_ts = (c.strip() for c in row)
        try:
            value = int(raw_value) if _INT_RE.match(raw_value) else float(raw_value)
            ts = int(raw_ts)
        except ValueError:
            raise ParseError(f"readings line {lineno}: bad value or timestamp") from None
        if ts < 0:
            raise ParseError(f"readings line {lineno}: negative timestamp")
        out.append(SensorReading(station, dtype, value, ts))
    return out


def parse_latencies(text: str, t: Topology) -> dict:
    """Latency file: list of ``{"a": node|[node, port], "b": ..., "latency_ms": x}``."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, list):
        raise ParseError("latency file must be a list")
    out = {}
    for i, item in enumerate(raw):
        where = f"latencies[{i}]"
        if not isinstance(item, dict) or "latency_ms" not in item:
            raise ParseError(f"{where}: expected an object with latency_ms")
        try:
            ms = _num(parse_weight(item["latency_ms"]))
        except ValueError as exc:
            raise ParseError(f"{where}.latency_ms: {exc}") from None
        if ms < 0:
            raise ParseError(f"{where}.latency_ms: must be nonnegative")
        a, b = item.get("a"), item.get("b")
        if isinstance(a, list) and isinstance(b, list):
            link = t.link_at(PortRef(a[0], a[1]))
            if link is None or link.other(a[0]) != PortRef(b[0], b[1]):
                raise ParseError(f"{where}: no link between {a} and {b}")
            out[link] = ms
        elif isinstance(a, str) and isinstance(b, str):
            if not any({a, b} == set(l.nodes) for l in t.links):
                raise ParseError(f"{where}: no link between {a} and {b}")
            out[frozenset((a, b))] = ms
        else:
            raise ParseError(f"{where}: endpoints must both be names or both be [node, port]")
    return out


@dataclass
class CollectionReport:
    plan: DatapathPlan
    epochs: list[EpochResult]
    rates: list[StationRate]

    @property
    def jitter_ok(self) -> bool:
        return all(e.jitter_ok for e in self.epochs)

    def to_dict(self) -> dict:
        req = self.plan.request
        return {
            "request": {
                "coverage": list(self.plan.stations),
                "data_type": req.data_type,
                "rate_hz": _num(req.rate_hz),
                "interval_s": _num(req.interval_s),
                "jitter_bound_ms": _num(req.jitter_bound_ms),
                "operation": req.operation.value,
            },
            "plan": self.plan.summary(),
            "epochs": [e.to_dict() for e in self.epochs],
            "rate": [r.to_dict() for r in self.rates],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def render(self) -> str:
        req = self.plan.request
        lines = [
            f"root {self.plan.root}; tree edges: " + ", ".join("-".join(e) for e in self.plan.summary()["tree_edges"]),
            f"{'epoch':>5}  {req.operation.value:>12}  {'count':>5}  {'spread_ms':>9}  jitter",
        ]
        for e in self.epochs:
            if isinstance(e.value, list):
                shown = ";".join(f"{s}={v}" for s, v in e.value)
            elif e.value is None:
                shown = "-"
            else:
                shown = f"{e.value:.6g}"
            flag = "ok" if e.jitter_ok else f"VIOLATION (> {_num(req.jitter_bound_ms)})"
            miss = f"  missing {','.join(e.missing)}" if e.missing else ""
            lines.append(f"{e.epoch_index:>5}  {shown:>12}  {e.count:>5}  {e.arrival_spread_ms:>9}  {flag}{miss}")
        for r in self.rates:
            mark = "FLAG" if r.flagged else "ok"
            lines.append(f"rate {r.station}: {r.observed_hz:.4g} Hz (expected {r.expected_hz:.4g}) {mark}")
        return "\n".join(lines)
