"""Match-action switch simulator for the IPv4 LPM ingress pipeline.

Headers are typed records rather than encoded bytes. Every function here is
pure: packets are frozen dataclasses and actions return new packets.
"""
from __future__ import annotations

import enum
import ipaddress
import json
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

from .errors import HopLimitExceeded, MissingHeader, UnknownNode, ValidationError
from .ruleplan import DROP, FORWARD, NO_ACTION, TABLE, TableEntry
from .topology import PortRef, Topology

ETH_IPV4 = 0x0800


@dataclass(frozen=True)
class PipelineProfile:
    name: str
    table: str
    actions: frozenset[str]


PROFILES: dict[str, PipelineProfile] = {
    "ipv4-mst": PipelineProfile("ipv4-mst", TABLE, frozenset({FORWARD, DROP, NO_ACTION})),
}
DEFAULT_PROFILE = "ipv4-mst"


@dataclass(frozen=True)
class EthernetHeader:
    src_mac: str
    dst_mac: str
    ether_type: int = ETH_IPV4


@dataclass(frozen=True)
class Ipv4Header:
    src: str
    dst: str
    ttl: int = 64

    def __post_init__(self):
        if not 0 <= self.ttl <= 255:
            raise ValueError(f"ttl {self.ttl} outside [0, 255]")


@dataclass(frozen=True)
class StandardMetadata:
    ingress_port: int = 0
    egress_spec: int | None = None
    dropped: bool = False


@dataclass(frozen=True)
class PacketState:
    eth: EthernetHeader
    ipv4: Ipv4Header | None = None
    payload: Any = None
    meta: StandardMetadata = field(default_factory=StandardMetadata)

    def __post_init__(self):
        if (self.eth.ether_type == ETH_IPV4) != (self.ipv4 is not None):
            raise ValueError("ipv4 header must be present exactly when ether_type is 0x0800")


@dataclass(frozen=True)
class SwitchRuntime:
    switch: str
    table: tuple[TableEntry, ...] = ()
    pipeline_profile: str = DEFAULT_PROFILE


class EventKind(str, enum.Enum):
    INGRESS = "Ingress"
    TABLE_HIT = "TableHit"
    TABLE_MISS = "TableMiss"
    ACTION_APPLIED = "ActionApplied"
    DROPPED = "Dropped"
    EMITTED = "Emitted"
    DELIVERED = "Delivered"


@dataclass(frozen=True)
class TraceEvent:
    kind: EventKind
    node: str
    detail: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "node": self.node, "detail": dict(self.detail)}


def lpm_lookup(table: Sequence[TableEntry], dst: str) -> TableEntry | None:
    """Longest-prefix match; ``None`` on a miss."""
    addr = ipaddress.IPv4Address(dst)
    best = None
    for entry in table:
        if addr in entry.match.network and (best is None or entry.match.prefix_len > best.match.prefix_len):
            best = entry
    return best


def apply_ipv4_forward(p: PacketState, dst_mac: str, port: int) -> PacketState:
    if p.ipv4 is None:
        raise MissingHeader("ipv4_forward needs an IPv4 header")
    meta = replace(p.meta, egress_spec=port)
    eth = replace(p.eth, src_mac=p.eth.dst_mac, dst_mac=dst_mac)
    ttl = max(p.ipv4.ttl - 1, 0)
    if ttl == 0:
        meta = replace(meta, dropped=True)
    return replace(p, eth=eth, ipv4=replace(p.ipv4, ttl=ttl), meta=meta)


def apply_drop(p: PacketState) -> PacketState:
    return replace(p, meta=replace(p.meta, dropped=True))


def process_packet(rt: SwitchRuntime, p: PacketState) -> tuple[PacketState, list[TraceEvent]]:
    """Run one packet through ``rt``'s ingress pipeline.

    Non-IPv4 frames and table misses drop. ``NoAction`` leaves egress unset,
    so the packet is dropped at the end of the pipeline.
    """
    sw = rt.switch
    events = [TraceEvent(EventKind.INGRESS, sw, {"port": p.meta.ingress_port})]
    if p.eth.ether_type != ETH_IPV4 or p.ipv4 is None:
        p = apply_drop(p)
        events.append(TraceEvent(EventKind.DROPPED, sw, {"reason": "NonIpv4"}))
        return p, events

    entry = lpm_lookup(rt.table, p.ipv4.dst)
    if entry is None:
        p = apply_drop(p)
        events.append(TraceEvent(EventKind.TABLE_MISS, sw, {"dst": p.ipv4.dst}))
        events.append(TraceEvent(EventKind.DROPPED, sw, {"reason": "TableMiss"}))
        return p, events
    events.append(TraceEvent(EventKind.TABLE_HIT, sw, {"entry": str(entry.match)}))

    if entry.action_name == FORWARD:
        p = apply_ipv4_forward(p, entry.dst_mac, entry.port)
        events.append(TraceEvent(EventKind.ACTION_APPLIED, sw, {
            "action": FORWARD, "port": entry.port, "dst_mac": entry.dst_mac, "ttl": p.ipv4.ttl,
        }))
        if p.meta.dropped:
            events.append(TraceEvent(EventKind.DROPPED, sw, {"reason": "TtlExpired"}))
        else:
            events.append(TraceEvent(EventKind.EMITTED, sw, {"port": p.meta.egress_spec, "dst_mac": p.eth.dst_mac}))
        return p, events

    if entry.action_name == DROP:
        p = apply_drop(p)
        events.append(TraceEvent(EventKind.ACTION_APPLIED, sw, {"action": DROP}))
        events.append(TraceEvent(EventKind.DROPPED, sw, {"reason": "DropAction"}))
        return p, events

    events.append(TraceEvent(EventKind.ACTION_APPLIED, sw, {"action": NO_ACTION}))
    p = apply_drop(p)
    events.append(TraceEvent(EventKind.DROPPED, sw, {"reason": "NoEgress"}))
    return p, events


@dataclass(frozen=True)
class Trace:
    origin: str
    dst_ip: str
    events: tuple[TraceEvent, ...]
    outcome: str  # "Delivered", "Dropped" or "HopLimitExceeded"
    packet: PacketState

    @property
    def delivered(self) -> bool:
        return self.outcome == "Delivered"

    @property
    def switch_path(self) -> list[str]:
        return [e.node for e in self.events if e.kind is EventKind.INGRESS]

    @property
    def final_node(self) -> str:
        return self.events[-1].node

    def to_dict(self) -> dict:
        return {
            "origin": self.origin,
            "dst": self.dst_ip,
            "outcome": self.outcome,
            "path": self.switch_path,
            "events": [e.to_dict() for e in self.events],
        }

    def render(self) -> str:
        return "\n".join(format_event(i, e) for i, e in enumerate(self.events))


def format_event(step: int, e: TraceEvent) -> str:
    detail = " ".join(f"{k}={v}" for k, v in e.detail.items())
    return f"{step} {e.kind.value} {e.node} {detail}".rstrip()


def runtimes_from_plan(plan, profile: str = DEFAULT_PROFILE) -> dict[str, SwitchRuntime]:
    return {sw: SwitchRuntime(sw, tuple(entries), profile) for sw, entries in plan.per_switch.items()}


def validate_runtime(t: Topology, rt: SwitchRuntime) -> None:
    node = t.node(rt.switch)
    if not node.is_switch:
        raise ValidationError(f"{rt.switch} is not a switch")
    profile = PROFILES.get(rt.pipeline_profile)
    if profile is None:
        raise ValidationError(f"unknown pipeline profile {rt.pipeline_profile!r}")
    keys = set()
    for e in rt.table:
        if e.table != profile.table:
            raise ValidationError(f"{rt.switch}: entry targets unknown table {e.table!r}")
        if e.action_name not in profile.actions:
            raise ValidationError(f"{rt.switch}: action {e.action_name} not in profile {profile.name}")
        if e.port is not None and e.port not in node.port_macs:
            raise ValidationError(f"{rt.switch}: entry {e.match} references missing port {e.port}")
        if e.match in keys:
            raise ValidationError(f"{rt.switch}: duplicate key {e.match}")
        keys.add(e.match)


def run_packet(
    t: Topology,
    runtimes: Mapping[str, SwitchRuntime],
    origin: str,
    dst_ip: str,
    initial_ttl: int = 64,
    payload: Any = None,
) -> Trace:
    """Inject a packet at ``origin`` and follow it hop by hop.

    Raises :class:`HopLimitExceeded` once the packet has entered more
    switches than the topology has nodes, which only a forwarding loop can
    cause.
    """
    host = t.node(origin)
    if not host.is_host:
        raise ValidationError(f"origin {origin} must be a host")
    missing = set(t.switches()) - set(runtimes)
    if missing:
        raise UnknownNode(f"no runtime for switches {sorted(missing)}")
    dst_ip = str(ipaddress.IPv4Address(dst_ip))

    _, at = t.attachment(origin)
    packet = PacketState(
        EthernetHeader(host.mac, t.receiving_mac(at)),
        Ipv4Header(host.ipv4, dst_ip, initial_ttl),
        payload,
        StandardMetadata(ingress_port=at.port),
    )
    events: list[TraceEvent] = []
    limit = len(t.nodes)
    hops = 0
    while True:
        hops += 1
        if hops > limit:
            trace = Trace(origin, dst_ip, tuple(events), "HopLimitExceeded", packet)
            raise HopLimitExceeded(f"packet from {origin} to {dst_ip} exceeded {limit} hops", trace)
        packet, evs = process_packet(runtimes[at.node], packet)
        events.extend(evs)
        if packet.meta.dropped:
            return Trace(origin, dst_ip, tuple(events), "Dropped", packet)

        out = PortRef(at.node, packet.meta.egress_spec)
        link = t.link_at(out)
        if link is None:
            events.append(TraceEvent(EventKind.DROPPED, at.node, {"reason": "NoLink", "port": out.port}))
            return Trace(origin, dst_ip, tuple(events), "Dropped", apply_drop(packet))
        far = link.other(at.node)
        far_node = t.nodes[far.node]
        if far_node.is_host:
            if far_node.ipv4 == dst_ip:
                events.append(TraceEvent(EventKind.DELIVERED, far.node, {"ttl": packet.ipv4.ttl}))
                return Trace(origin, dst_ip, tuple(events), "Delivered", packet)
            events.append(TraceEvent(EventKind.DROPPED, far.node, {"reason": "NotForHost"}))
            return Trace(origin, dst_ip, tuple(events), "Dropped", apply_drop(packet))
        at = far
        packet = replace(packet, meta=StandardMetadata(ingress_port=far.port))


def trace_to_json(trace: Trace) -> str:
    return json.dumps(trace.to_dict(), indent=2) + "\n"
