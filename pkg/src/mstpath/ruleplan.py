"""Per-switch LPM flow rules: synthesis from a rooted tree, runtime-file I/O, and plan diffs."""
from __future__ import annotations

import enum
import ipaddress
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import ParseError, UnknownAction, UnknownSwitch, UnreachableHost, ValidationError
from .mst import SpanningTree, tree_path
from .topology import PortRef, Topology, normalize_mac

TABLE = "MyIngress.ipv4_lpm"
MATCH_FIELD = "hdr.ipv4.dstAddr"
FORWARD = "MyIngress.ipv4_forward"
DROP = "MyIngress.drop"
NO_ACTION = "NoAction"
ACTIONS = (FORWARD, DROP, NO_ACTION)


@dataclass(frozen=True, order=True)
class LpmKey:
    address: str
    prefix_len: int = 32

    def __post_init__(self):
        if isinstance(self.prefix_len, bool) or not isinstance(self.prefix_len, int) or not 0 <= self.prefix_len <= 32:
            raise ValidationError(f"prefix length {self.prefix_len!r} outside [0, 32]")
        try:
            net = ipaddress.IPv4Network(f"{self.address}/{self.prefix_len}", strict=True)
        except ValueError as exc:
            raise ValidationError(f"bad LPM key {self.address}/{self.prefix_len}: {exc}") from None
        object.__setattr__(self, "address", str(net.network_address))

    @property
    def network(self) -> ipaddress.IPv4Network:
        return ipaddress.IPv4Network(f"{self.address}/{self.prefix_len}")

    def sort_key(self):
        return (int(ipaddress.IPv4Address(self.address)), self.prefix_len)

    def __str__(self):
        return f"{self.address}/{self.prefix_len}"


@dataclass(frozen=True)
class TableEntry:
    match: LpmKey
    action_name: str = FORWARD
    dst_mac: str | None = None
    port: int | None = None
    table: str = TABLE

    def __post_init__(self):
        if self.action_name not in ACTIONS:
            raise UnknownAction(f"unknown action {self.action_name!r}")
        if self.action_name == FORWARD:
            if self.dst_mac is None or self.port is None:
                raise ValidationError(f"forward entry for {self.match} needs dstAddr and port")
            object.__setattr__(self, "dst_mac", normalize_mac(self.dst_mac))
        elif self.dst_mac is not None or self.port is not None:
            raise ValidationError(f"{self.action_name} entry for {self.match} takes no parameters")

    @property
    def key(self) -> LpmKey:
        return self.match

    def to_dict(self) -> dict:
        params = {"dstAddr": self.dst_mac, "port": self.port} if self.action_name == FORWARD else {}
        return {
            "table": self.table,
            "match": {MATCH_FIELD: [self.match.address, self.match.prefix_len]},
            "action_name": self.action_name,
            "action_params": params,
        }


def forward(address: str, dst_mac: str, port: int, prefix_len: int = 32) -> TableEntry:
    return TableEntry(LpmKey(address, prefix_len), FORWARD, dst_mac, port)


@dataclass(frozen=True)
class RulePlan:
    """Entries per switch, each list kept sorted by destination address."""

    per_switch: Mapping[str, tuple[TableEntry, ...]] = field(default_factory=dict)

    def __post_init__(self):
        normalized = {}
        for sw, entries in self.per_switch.items():
            entries = tuple(sorted(entries, key=lambda e: e.match.sort_key()))
            keys = [e.match for e in entries]
            if len(set(keys)) != len(keys):
                raise ValidationError(f"duplicate LPM key in {sw}'s entries")
            normalized[sw] = entries
        object.__setattr__(self, "per_switch", dict(sorted(normalized.items())))

    def __eq__(self, other):
        # a switch with no entries equals an absent switch
        if not isinstance(other, RulePlan):
            return NotImplemented
        return {s: e for s, e in self.per_switch.items() if e} == {s: e for s, e in other.per_switch.items() if e}

    __hash__ = None

    def entries(self, switch: str) -> tuple[TableEntry, ...]:
        return self.per_switch.get(switch, ())

    def switches(self) -> list[str]:
        return list(self.per_switch)


class OpKind(str, enum.Enum):
    INSERT = "Insert"
    MODIFY = "Modify"
    DELETE = "Delete"


@dataclass(frozen=True)
class RuleOp:
    kind: OpKind
    switch: str
    entry: TableEntry


@dataclass(frozen=True)
class RuleDelta:
    ops: tuple[RuleOp, ...] = ()

    def __len__(self):
        return len(self.ops)

    def __iter__(self):
        return iter(self.ops)


def synthesize_rules(t: Topology, tree: SpanningTree) -> RulePlan:
    """One /32 forward entry per (switch, host), following the tree.

    The entry's port is the switch's tree port toward the next hop on the
    path to the host; ``dstAddr`` is the MAC of the receiving port of that
    next hop (host MAC when the host is directly attached).
    """
    per_switch = {}
    for sw in t.switches():
        entries = []
        for h in t.hosts():
            if h not in tree.parent:
                raise UnreachableHost(f"host {h} is not in the tree")
            path = tree_path(tree, sw, h)
            nxt = path[1]
            port = tree.port_toward(sw, nxt)
            far = t.link_at(PortRef(sw, port)).other(sw)
            entries.append(forward(t.nodes[h].ipv4, t.receiving_mac(far), port))
        per_switch[sw] = tuple(entries)
    return RulePlan(per_switch)


# -- runtime file format -------------------------------------------------


def _entry_text(entry: TableEntry) -> str:
    # Matches the two-space layout used by <switch>-runtime.json files,
    # with the match pair kept on one line.
    lines = [
        "  {",
        f'    "table": {json.dumps(entry.table)},',
        '    "match": {',
        f"      {json.dumps(MATCH_FIELD)}: [{json.dumps(entry.match.address)}, {entry.match.prefix_len}]",
        "    },",
        f'    "action_name": {json.dumps(entry.action_name)},',
    ]
    if entry.action_name == FORWARD:
        lines += [
            '    "action_params": {',
            f'      "dstAddr": {json.dumps(entry.dst_mac)},',
            f'      "port": {entry.port}',
            "    }",
        ]
    else:
        lines.append('    "action_params": {}')
    lines.append("  }")
    return "\n".join(lines)


def render_entries(entries: Iterable[TableEntry]) -> str:
    entries = list(entries)
    if not entries:
        return "[]\n"
    return "[\n" + ",\n".join(_entry_text(e) for e in entries) + "\n]\n"


def serialize_runtime(plan: RulePlan, switch: str) -> str:
    if switch not in plan.per_switch:
        raise UnknownSwitch(f"no rules for switch {switch!r}")
    return render_entries(plan.entries(switch))


def runtime_filename(switch: str) -> str:
    return f"{switch}-runtime.json"


def entry_from_dict(raw, where: str = "entry") -> TableEntry:
    if not isinstance(raw, dict):
        raise ParseError(f"{where}: expected an object")
    for k in ("table", "match", "action_name"):
        if k not in raw:
            raise ParseError(f"{where}: missing {k!r}")
    action = raw["action_name"]
    if action not in ACTIONS:
        raise UnknownAction(f"{where}: unknown action {action!r}")
    match = raw["match"]
    if not isinstance(match, dict) or set(match) != {MATCH_FIELD}:
        raise ParseError(f"{where}.match: expected exactly {MATCH_FIELD!r}")
    pair = match[MATCH_FIELD]
    if not (isinstance(pair, list) and len(pair) == 2 and isinstance(pair[0], str) and type(pair[1]) is int):
        raise ParseError(f"{where}.match: expected [address, prefix_len]")
    params = raw.get("action_params", {})
    if not isinstance(params, dict):
        raise ParseError(f"{where}.action_params: expected an object")
    try:
        key = LpmKey(pair[0], pair[1])
        if action == FORWARD:
            if set(params) != {"dstAddr", "port"} or type(params["port"]) is not int:
                raise ParseError(f"{where}.action_params: forward needs dstAddr and integer port")
            return TableEntry(key, action, params["dstAddr"], params["port"], raw["table"])
        if params:
            raise ParseError(f"{where}.action_params: {action} takes no parameters")
        return TableEntry(key, action, table=raw["table"])
    except (ValidationError, ValueError) as exc:
        raise ParseError(f"{where}: {exc}") from None


def parse_runtime(doc: str) -> list[TableEntry]:
    """Parse a runtime document: a JSON list of entries.

    An object with a ``table_entries`` list is accepted too.
    """
    try:
        raw = json.loads(doc)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if isinstance(raw, dict) and isinstance(raw.get("table_entries"), list):
        raw = raw["table_entries"]
    if not isinstance(raw, list):
        raise ParseError("runtime document must be a list of entries")
    return [entry_from_dict(r, f"entry[{i}]") for i, r in enumerate(raw)]


# -- diffs ---------------------------------------------------------------


def diff_rules(old: RulePlan, new: RulePlan) -> RuleDelta:
    ops = []
    for sw in sorted(set(old.per_switch) | set(new.per_switch)):
        before = {e.match: e for e in old.entries(sw)}
        after = {e.match: e for e in new.entries(sw)}
        for key in sorted(set(before) | set(after), key=LpmKey.sort_key):
            if key not in after:
                ops.append(RuleOp(OpKind.DELETE, sw, before[key]))
            elif key not in before:
                ops.append(RuleOp(OpKind.INSERT, sw, after[key]))
            elif before[key] != after[key]:
                ops.append(RuleOp(OpKind.MODIFY, sw, after[key]))
    return RuleDelta(tuple(ops))


def apply_delta(plan: RulePlan, delta: RuleDelta) -> RulePlan:
    tables = {sw: {e.match: e for e in entries} for sw, entries in plan.per_switch.items()}
    for op in delta:
        table = tables.setdefault(op.switch, {})
        key = op.entry.match
        if op.kind is OpKind.INSERT:
            if key in table:
                raise ValidationError(f"insert of existing key {key} on {op.switch}")
            table[key] = op.entry
        elif op.kind is OpKind.MODIFY:
            if key not in table:
                raise ValidationError(f"modify of missing key {key} on {op.switch}")
            table[key] = op.entry
        else:
            if key not in table:
                raise ValidationError(f"delete of missing key {key} on {op.switch}")
            del table[key]
    return RulePlan({sw: tuple(t.values()) for sw, t in tables.items()})
