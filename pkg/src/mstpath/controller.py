"""In-process control plane: installs pipelines and table entries into switch runtimes.

Every change goes through a :class:`ControlOp` appended to ``op_log``; the
log replayed from empty state rebuilds the same tables.
"""
from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .errors import HopLimitExceeded, ParseError, UnknownRoot, ValidationError
from .mst import SpanningTree, compute_mst, orient_tree
from .pipeline import DEFAULT_PROFILE, PROFILES, SwitchRuntime, Trace, run_packet, validate_runtime
from .ruleplan import (
    OpKind,
    RulePlan,
    TableEntry,
    diff_rules,
    entry_from_dict,
    parse_runtime,
    render_entries,
    synthesize_rules,
)
from .topology import Topology, normalize_ipv4

log = logging.getLogger(__name__)


class ControlKind(str, enum.Enum):
    SET_PIPELINE = "SetPipeline"
    INSERT = "InsertEntry"
    MODIFY = "ModifyEntry"
    DELETE = "DeleteEntry"


_FROM_RULE_OP = {OpKind.INSERT: ControlKind.INSERT, OpKind.MODIFY: ControlKind.MODIFY, OpKind.DELETE: ControlKind.DELETE}


@dataclass(frozen=True)
class ControlOp:
    kind: ControlKind
    switch: str
    payload: str | TableEntry

    def to_dict(self) -> dict:
        body = self.payload if isinstance(self.payload, str) else self.payload.to_dict()
        key = "profile" if self.kind is ControlKind.SET_PIPELINE else "entry"
        return {"op": self.kind.value, "switch": self.switch, key: body}

    @classmethod
    def from_dict(cls, raw: dict) -> "ControlOp":
        kind = ControlKind(raw["op"])
        if kind is ControlKind.SET_PIPELINE:
            return cls(kind, raw["switch"], raw["profile"])
        return cls(kind, raw["switch"], entry_from_dict(raw["entry"]))


def _empty_runtime(switch: str) -> SwitchRuntime:
    return SwitchRuntime(switch, (), "")


def apply_op(runtimes: dict[str, SwitchRuntime], op: ControlOp) -> None:
    """Apply one op in place, enforcing key presence/absence."""
    rt = runtimes.get(op.switch) or _empty_runtime(op.switch)
    if op.kind is ControlKind.SET_PIPELINE:
        if op.payload not in PROFILES:
            raise ValidationError(f"unknown pipeline profile {op.payload!r}")
        runtimes[op.switch] = SwitchRuntime(op.switch, rt.table, op.payload)
        return
    entry = op.payload
    table = {e.match: e for e in rt.table}
    if op.kind is ControlKind.INSERT:
        if entry.match in table:
            raise ValidationError(f"InsertEntry: key {entry.match} already on {op.switch}")
        table[entry.match] = entry
    elif op.kind is ControlKind.MODIFY:
        if entry.match not in table:
            raise ValidationError(f"ModifyEntry: key {entry.match} absent on {op.switch}")
        table[entry.match] = entry
    else:
        if entry.match not in table:
            raise ValidationError(f"DeleteEntry: key {entry.match} absent on {op.switch}")
        del table[entry.match]
    ordered = tuple(sorted(table.values(), key=lambda e: e.match.sort_key()))
    runtimes[op.switch] = SwitchRuntime(op.switch, ordered, rt.pipeline_profile)


def replay(op_log: Sequence[ControlOp]) -> dict[str, SwitchRuntime]:
    runtimes: dict[str, SwitchRuntime] = {}
    for op in op_log:
        apply_op(runtimes, op)
    return runtimes


def snapshot(runtimes: Mapping[str, SwitchRuntime]) -> dict[str, list[dict]]:
    return {sw: [e.to_dict() for e in runtimes[sw].table] for sw in sorted(runtimes)}


@dataclass
class ControllerState:
    topology: Topology
    current_root: str | None = None
    runtimes: dict[str, SwitchRuntime] = field(default_factory=dict)
    op_log: list[ControlOp] = field(default_factory=list)
    tree: SpanningTree | None = None

    def submit(self, op: ControlOp) -> None:
        apply_op(self.runtimes, op)
        self.op_log.append(op)
        log.debug("%s %s %s", op.kind.value, op.switch, op.payload if isinstance(op.payload, str) else op.payload.match)

    def current_plan(self) -> RulePlan:
        return RulePlan({sw: rt.table for sw, rt in self.runtimes.items()})


def static_deploy(t: Topology, rule_files: Mapping[str, str | Path], profile: str = DEFAULT_PROFILE) -> ControllerState:
    """Load one runtime file per switch as-is.

    ``rule_files`` values may be paths or the document text itself.
    """
    missing = set(t.switches()) - set(rule_files)
    if missing:
        raise ParseError(f"missing runtime files for {sorted(missing)}")
    state = ControllerState(t)
    for sw in t.switches():
        src = rule_files[sw]
        text = src.read_text(encoding="utf-8") if isinstance(src, Path) else src
        entries = parse_runtime(text)
        validate_runtime(t, SwitchRuntime(sw, tuple(entries), profile))
        state.submit(ControlOp(ControlKind.SET_PIPELINE, sw, profile))
        for e in entries:
            state.submit(ControlOp(ControlKind.INSERT, sw, e))
    return state


def plan_for_root(t: Topology, root: str) -> tuple[SpanningTree, RulePlan]:
    tree = orient_tree(t, compute_mst(t, root), root)
    return tree, synthesize_rules(t, tree)


def dynamic_set_root(state: ControllerState, new_root: str) -> ControllerState:
    """Re-root the MST and push only the entries that changed.

    Switches without the pipeline installed first receive a SetPipeline op.
    The whole update is applied before returning; callers never observe a
    half-updated network.
    """
    if new_root not in state.topology.nodes:
        raise UnknownRoot(f"unknown root {new_root!r}")
    tree, plan = plan_for_root(state.topology, new_root)
    delta = diff_rules(state.current_plan(), plan)
    # stage on a copy so a failing op leaves state untouched
    staged = dict(state.runtimes)
    ops = []
    for sw in state.topology.switches():
        rt = staged.get(sw)
        if rt is None or rt.pipeline_profile != DEFAULT_PROFILE:
            ops.append(ControlOp(ControlKind.SET_PIPELINE, sw, DEFAULT_PROFILE))
    ops += [ControlOp(_FROM_RULE_OP[r.kind], r.switch, r.entry) for r in delta]
    for op in ops:
        apply_op(staged, op)
    state.runtimes = staged
    state.op_log.extend(ops)
    state.current_root = tree.root
    state.tree = tree
    log.info("root -> %s: %d ops", tree.root, len(ops))
    return state


# -- scenarios -----------------------------------------------------------


class EventType(str, enum.Enum):
    SET_ROOT = "SetRoot"
    INJECT = "InjectPacket"
    CHECKPOINT = "Checkpoint"


@dataclass(frozen=True)
class ScenarioEvent:
    kind: EventType
    time: int
    node: str | None = None  # SetRoot target
    origin: str | None = None
    dst: str | None = None
    ttl: int = 64
    label: str | None = None


def parse_scenario(text: str) -> list[ScenarioEvent]:
    """Scenario documents: ``{"events": [...]}`` or a bare list of events.

    Each event has ``time`` (strictly increasing integer) and ``kind``:
    ``SetRoot`` with ``node``; ``InjectPacket`` with ``origin``, ``dst``
    (IPv4 or host name) and optional ``ttl``; ``Checkpoint`` with ``label``.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if isinstance(raw, dict):
        raw = raw.get("events")
    if not isinstance(raw, list):
        raise ParseError("scenario must be a list of events or an object with 'events'")
    events = []
    for i, r in enumerate(raw):
        where = f"events[{i}]"
        if not isinstance(r, dict):
            raise ParseError(f"{where}: expected an object")
        try:
            kind = EventType(r.get("kind"))
        except ValueError:
            raise ParseError(f"{where}.kind: unknown event kind {r.get('kind')!r}") from None
        t = r.get("time", i)
        if type(t) is not int:
            raise ParseError(f"{where}.time: expected an integer")
        if kind is EventType.SET_ROOT:
            if not isinstance(r.get("node"), str):
                raise ParseError(f"{where}.node: expected a node name")
            events.append(ScenarioEvent(kind, t, node=r["node"]))
        elif kind is EventType.INJECT:
            if not isinstance(r.get("origin"), str) or not isinstance(r.get("dst"), str):
                raise ParseError(f"{where}: InjectPacket needs 'origin' and 'dst'")
            ttl = r.get("ttl", 64)
            if type(ttl) is not int or not 0 <= ttl <= 255:
                raise ParseError(f"{where}.ttl: expected an integer in [0, 255]")
            events.append(ScenarioEvent(kind, t, origin=r["origin"], dst=r["dst"], ttl=ttl))
        else:
            events.append(ScenarioEvent(kind, t, label=str(r.get("label", f"t{t}"))))
    return events


@dataclass
class ScenarioReport:
    traces: list[dict] = field(default_factory=list)
    op_log: list[ControlOp] = field(default_factory=list)
    snapshots: dict[str, dict] = field(default_factory=dict)
    final_tables: dict[str, list[dict]] = field(default_factory=dict)

    @property
    def all_delivered(self) -> bool:
        return all(t["outcome"] == "Delivered" for t in self.traces)

    def to_dict(self) -> dict:
        return {
            "op_log": [op.to_dict() for op in self.op_log],
            "traces": self.traces,
            "snapshots": self.snapshots,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def render(self) -> str:
        lines = [f"ops logged: {len(self.op_log)}"]
        for op in self.op_log:
            what = op.payload if isinstance(op.payload, str) else f"{op.payload.match} -> {_entry_brief(op.payload)}"
            lines.append(f"  {op.kind.value:<12} {op.switch:<6} {what}")
        for tr in self.traces:
            lines.append(f"t={tr['time']} {tr['origin']} -> {tr['dst']} [root {tr['root']}]: {tr['outcome']} via {' '.join(tr['path'])}")
        for label in self.snapshots:
            lines.append(f"checkpoint {label}")
        return "\n".join(lines)


def _entry_brief(e: TableEntry) -> str:
    return f"{e.action_name}({e.dst_mac}, {e.port})" if e.port is not None else e.action_name


def _resolve_dst(t: Topology, dst: str) -> str:
    if dst in t.nodes:
        node = t.nodes[dst]
        if not node.is_host:
            raise ValidationError(f"packet destination {dst} is not a host")
        return node.ipv4
    try:
        return normalize_ipv4(dst)
    except ValueError:
        raise ValidationError(f"bad packet destination {dst!r}") from None


def run_scenario(t: Topology, events: Sequence[ScenarioEvent]) -> ScenarioReport:
    for prev, cur in zip(events, events[1:]):
        if cur.time <= prev.time:
            raise ValidationError(f"event times must strictly increase ({prev.time} then {cur.time})")
    state = ControllerState(t)
    report = ScenarioReport(op_log=state.op_log)
    for ev in events:
        if ev.kind is EventType.SET_ROOT:
            dynamic_set_root(state, ev.node)
        elif ev.kind is EventType.INJECT:
            if state.current_root is None:
                raise ValidationError(f"t={ev.time}: packet injected before any SetRoot")
            dst_ip = _resolve_dst(t, ev.dst)
            try:
                trace: Trace = run_packet(t, state.runtimes, ev.origin, dst_ip, ev.ttl)
            except HopLimitExceeded as exc:
                trace = exc.trace
            record = {"time": ev.time, "root": state.current_root, **trace.to_dict()}
            report.traces.append(record)
        else:
            report.snapshots[ev.label] = {"root": state.current_root, "tables": snapshot(state.runtimes)}
    report.op_log = state.op_log
    report.final_tables = snapshot(state.runtimes)
    return report


def write_runtime_files(runtimes: Mapping[str, SwitchRuntime], out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for sw in sorted(runtimes):
        p = out_dir / f"{sw}-runtime.json"
        p.write_text(render_entries(runtimes[sw].table), encoding="utf-8")
        paths.append(p)
    return paths
