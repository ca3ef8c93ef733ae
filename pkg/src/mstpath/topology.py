"""Network model: switches, hosts, numbered ports and weighted links.

Topology files are JSON documents::

    {
      "nodes": [
        {"name": "s1", "kind": "switch", "port_macs": {"1": "00:00:00:01:01:01"}},
        {"name": "h1", "kind": "host", "ipv4": "10.0.1.1", "mac": "00:00:00:00:01:01"}
      ],
      "links": [
        {"a": ["h1", 1], "b": ["s1", 1]},
        {"a": ["s1", 2], "b": ["s2", 1], "weight": "3/2"}
      ],
      "groups": {"seoul": ["h1"]}
    }

``weight`` is optional (default 1) and may be an integer, a decimal or a
``"p/q"`` string; it is held as an exact :class:`fractions.Fraction`.
``groups`` is optional and names sets of hosts usable as request coverage.
"""
from __future__ import annotations

import enum
import ipaddress
import json
import re
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from .errors import DisconnectedGraph, ParseError, UnknownNode, ValidationError

_MAC_RE = re.compile(r"^[0-9a-f]{2}(:[0-9a-f]{2}){5}$")


class NodeKind(str, enum.Enum):
    SWITCH = "switch"
    HOST = "host"


def normalize_mac(value) -> str:
    if not isinstance(value, str):
        raise ValueError(f"MAC must be a string, got {value!r}")
    mac = value.strip().lower().replace("-", ":")
    if not _MAC_RE.match(mac):
        raise ValueError(f"malformed MAC {value!r}")
    return mac


def normalize_ipv4(value) -> str:
    if not isinstance(value, str):
        raise ValueError(f"IPv4 address must be a string, got {value!r}")
    return str(ipaddress.IPv4Address(value.strip()))


def parse_weight(value) -> Fraction:
    if isinstance(value, bool):
        raise ValueError("weight must be numeric")
    if isinstance(value, float):
        # repr gives the shortest decimal that round-trips, so 0.1 -> 1/10
        value = repr(value)
    try:
        w = Fraction(value)
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"bad weight {value!r}") from exc
    return w


def format_weight(w: Fraction):
    return int(w) if w.denominator == 1 else f"{w.numerator}/{w.denominator}"


@dataclass(frozen=True)
class Node:
    name: str
    kind: NodeKind
    ipv4: str | None = None
    mac: str | None = None
    port_macs: Mapping[int, str] = field(default_factory=dict)

    @property
    def is_switch(self) -> bool:
        return self.kind is NodeKind.SWITCH

    @property
    def is_host(self) -> bool:
        return self.kind is NodeKind.HOST

    def __hash__(self):
        return hash((self.name, self.kind, self.ipv4, self.mac, tuple(sorted(self.port_macs.items()))))


@dataclass(frozen=True, order=True)
class PortRef:
    node: str
    port: int

    def __str__(self):
        return f"{self.node}:{self.port}"


@dataclass(frozen=True)
class Link:
    a: PortRef
    b: PortRef
    weight: Fraction = Fraction(1)

    @property
    def nodes(self) -> tuple[str, str]:
        return (self.a.node, self.b.node)

    def end_at(self, node: str) -> PortRef:
        if self.a.node == node:
            return self.a
        if self.b.node == node:
            return self.b
        raise UnknownNode(f"{node} is not an endpoint of {self}")

    def other(self, node: str) -> PortRef:
        return self.b if self.end_at(node) is self.a else self.a

    def sort_key(self):
        """Total order used for deterministic tie-breaking."""
        lo, hi = sorted((self.a, self.b))
        return (self.weight, lo.node, hi.node, min(self.a.port, self.b.port), lo.port, hi.port)

    def canonical(self) -> tuple[PortRef, PortRef]:
        return tuple(sorted((self.a, self.b)))

    def __eq__(self, other):
        if not isinstance(other, Link):
            return NotImplemented
        return self.canonical() == other.canonical() and self.weight == other.weight

    def __hash__(self):
        return hash((self.canonical(), self.weight))

    def __str__(self):
        return f"{self.a}--{self.b} (w={format_weight(self.weight)})"


class Topology:
    """Validated, read-only network graph.

    Construction checks every invariant and raises :class:`ValidationError`
    naming the first violation.
    """

    def __init__(self, nodes: Iterable[Node], links: Iterable[Link], groups: Mapping[str, Iterable[str]] | None = None):
        node_map: dict[str, Node] = {}
        for n in nodes:
            if not n.name:
                raise ValidationError("empty node name")
            if n.name in node_map:
                raise ValidationError(f"duplicate node name {n.name!r}")
            node_map[n.name] = n
        self._nodes = node_map
        self._links = tuple(links)
        self._groups = {g: tuple(members) for g, members in (groups or {}).items()}
        self._by_port: dict[PortRef, Link] = {}
        self._validate()

    # -- validation -------------------------------------------------------

    def _validate(self):
        seen_ips: dict[str, str] = {}
        for n in self._nodes.values():
            if n.is_host:
                if n.ipv4 is None or n.mac is None:
                    raise ValidationError(f"host {n.name} needs exactly one ipv4 and one mac")
                if n.port_macs:
                    raise ValidationError(f"host {n.name} must not declare port_macs")
                if n.ipv4 in seen_ips:
                    raise ValidationError(f"duplicate IPv4 {n.ipv4} on {seen_ips[n.ipv4]} and {n.name}")
                seen_ips[n.ipv4] = n.name
            elif n.ipv4 is not None or n.mac is not None:
                raise ValidationError(f"switch {n.name} must not carry ipv4/mac; use port_macs")

        if not any(n.is_switch for n in self._nodes.values()):
            raise ValidationError("topology has no switches")

        for link in self._links:
            for end in (link.a, link.b):
                if end.node not in self._nodes:
                    raise ValidationError(f"dangling port {end}: unknown node {end.node!r}")
                if not isinstance(end.port, int) or isinstance(end.port, bool) or end.port < 1:
                    raise ValidationError(f"port numbers must be positive integers, got {end}")
                if end in self._by_port:
                    raise ValidationError(f"port {end} used by more than one link")
                self._by_port[end] = link
                node = self._nodes[end.node]
                if node.is_switch and end.port not in node.port_macs:
                    raise ValidationError(f"dangling port {end}: switch has no MAC for port {end.port}")
            if link.a.node == link.b.node:
                raise ValidationError(f"self-loop on {link.a.node}")
            if link.weight <= 0:
                raise ValidationError(f"link {link} must have positive weight")

        for n in self._nodes.values():
            if not n.is_host:
                continue
            attached = [l for l in self._links if n.name in l.nodes]
            if len(attached) != 1:
                raise ValidationError(f"host {n.name} has {len(attached)} links; exactly 1 required")
            if not self._nodes[attached[0].other(n.name).node].is_switch:
                raise ValidationError(f"host {n.name} must attach to a switch")

        for g, members in self._groups.items():
            for m in members:
                if m not in self._nodes or not self._nodes[m].is_host:
                    raise ValidationError(f"group {g!r} member {m!r} is not a host")

        unreached = set(self._nodes) - self._reachable(next(iter(self._nodes)))
        if unreached:
            raise DisconnectedGraph(f"disconnected graph: cannot reach {sorted(unreached)}")

    def _reachable(self, start: str) -> set[str]:
        seen = {start}
        queue = deque([start])
        while queue:
            cur = queue.popleft()
            for _, far, _ in self.neighbors(cur):
                if far.node not in seen:
                    seen.add(far.node)
                    queue.append(far.node)
        return seen

    # -- queries ----------------------------------------------------------

    @property
    def nodes(self) -> Mapping[str, Node]:
        return self._nodes

    @property
    def links(self) -> tuple[Link, ...]:
        return self._links

    @property
    def groups(self) -> Mapping[str, tuple[str, ...]]:
        return self._groups

    def node(self, name: str) -> Node:
        try:
            return self._nodes[name]
        except KeyError:
            raise UnknownNode(f"unknown node {name!r}") from None

    def switches(self) -> list[str]:
        return sorted(n for n, v in self._nodes.items() if v.is_switch)

    def hosts(self) -> list[str]:
        return sorted(n for n, v in self._nodes.items() if v.is_host)

    def link_at(self, ref: PortRef) -> Link | None:
        return self._by_port.get(ref)

    def neighbors(self, name: str) -> list[tuple[PortRef, PortRef, Fraction]]:
        if name not in self._nodes:
            raise UnknownNode(f"unknown node {name!r}")
        out = [(l.end_at(name), l.other(name), l.weight) for l in self._links if name in l.nodes]
        return sorted(out, key=lambda e: e[0].port)

    def attachment(self, host: str) -> tuple[PortRef, PortRef]:
        """(host side, switch side) of a host's single link."""
        if not self.node(host).is_host:
            raise ValidationError(f"{host} is not a host")
        local, far, _ = self.neighbors(host)[0]
        return local, far

    def host_by_ip(self, ipv4: str) -> str | None:
        for n in self._nodes.values():
            if n.is_host and n.ipv4 == ipv4:
                return n.name
        return None

    def receiving_mac(self, ref: PortRef) -> str:
        """MAC address a frame arriving at ``ref`` is addressed to."""
        node = self.node(ref.node)
        return node.mac if node.is_host else node.port_macs[ref.port]

    def switch_links(self) -> list[Link]:
        return [l for l in self._links if all(self._nodes[n].is_switch for n in l.nodes)]

    def __eq__(self, other):
        if not isinstance(other, Topology):
            return NotImplemented
        return (
            self._nodes == other._nodes
            and set(self._links) == set(other._links)
            and {g: set(m) for g, m in self._groups.items()} == {g: set(m) for g, m in other._groups.items()}
        )

    def __repr__(self):
        return f"Topology({len(self._nodes)} nodes, {len(self._links)} links)"


def neighbors(t: Topology, n: str):
    return t.neighbors(n)


# -- (de)serialization ----------------------------------------------------


def _portref(raw, where: str) -> PortRef:
    if not (isinstance(raw, list) and len(raw) == 2 and isinstance(raw[0], str)):
        raise ParseError(f"{where}: expected [node, port]")
    port = raw[1]
    if isinstance(port, bool) or not isinstance(port, int):
        raise ParseError(f"{where}: port must be an integer")
    return PortRef(raw[0], port)


def topology_from_dict(doc) -> Topology:
    if not isinstance(doc, dict):
        raise ParseError("topology document must be an object")
    raw_nodes = doc.get("nodes")
    raw_links = doc.get("links", [])
    if not isinstance(raw_nodes, list):
        raise ParseError("field 'nodes' must be a list")
    if not isinstance(raw_links, list):
        raise ParseError("field 'links' must be a list")

    nodes = []
    for i, rn in enumerate(raw_nodes):
        where = f"nodes[{i}]"
        if not isinstance(rn, dict) or not isinstance(rn.get("name"), str):
            raise ParseError(f"{where}: expected an object with a string 'name'")
        try:
            kind = NodeKind(rn.get("kind"))
        except ValueError:
            raise ParseError(f"{where}.kind: expected 'switch' or 'host', got {rn.get('kind')!r}") from None
        try:
            ipv4 = normalize_ipv4(rn["ipv4"]) if "ipv4" in rn else None
        except ValueError as exc:
            raise ParseError(f"{where}.ipv4: {exc}") from None
        try:
            mac = normalize_mac(rn["mac"]) if "mac" in rn else None
        except ValueError as exc:
            raise ParseError(f"{where}.mac: {exc}") from None
        port_macs = {}
        raw_pm = rn.get("port_macs", {})
        if not isinstance(raw_pm, dict):
            raise ParseError(f"{where}.port_macs: expected an object")
        for p, m in raw_pm.items():
            try:
                port_macs[int(p)] = normalize_mac(m)
            except ValueError as exc:
                raise ParseError(f"{where}.port_macs[{p!r}]: {exc}") from None
        nodes.append(Node(rn["name"], kind, ipv4, mac, port_macs))

    links = []
    for i, rl in enumerate(raw_links):
        where = f"links[{i}]"
        if not isinstance(rl, dict):
            raise ParseError(f"{where}: expected an object")
        try:
            weight = parse_weight(rl.get("weight", 1))
        except ValueError as exc:
            raise ParseError(f"{where}.weight: {exc}") from None
        links.append(Link(_portref(rl.get("a"), f"{where}.a"), _portref(rl.get("b"), f"{where}.b"), weight))

    groups = doc.get("groups", {})
    if not isinstance(groups, dict) or not all(isinstance(v, list) for v in groups.values()):
        raise ParseError("field 'groups' must map names to lists of hosts")
    return Topology(nodes, links, groups)


def parse_topology(text: str) -> Topology:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return topology_from_dict(doc)


def topology_to_dict(t: Topology) -> dict:
    nodes = []
    for name in sorted(t.nodes):
        n = t.nodes[name]
        entry = {"name": n.name, "kind": n.kind.value}
        if n.is_host:
            entry["ipv4"] = n.ipv4
            entry["mac"] = n.mac
        else:
            entry["port_macs"] = {str(p): m for p, m in sorted(n.port_macs.items())}
        nodes.append(entry)
    links = []
    for l in sorted(t.links, key=Link.canonical):
        a, b = l.canonical()
        links.append({"a": [a.node, a.port], "b": [b.node, b.port], "weight": format_weight(l.weight)})
    doc = {"nodes": nodes, "links": links}
    if t.groups:
        doc["groups"] = {g: list(m) for g, m in sorted(t.groups.items())}
    return doc


def dump_topology(t: Topology) -> str:
    return json.dumps(topology_to_dict(t), indent=2) + "\n"


def load_topology(path) -> Topology:
    """Load a topology file.

    ``path`` may also name a bundled fixture (``paper-topo``, ``ring4``,
    ``seoul-topo``) when no such file exists on disk.
    """
    p = Path(path)
    if not p.exists():
        bundled = resources.files("mstpath") / "fixtures" / f"{path}.json"
        if isinstance(path, str) and bundled.is_file():
            return parse_topology(bundled.read_text(encoding="utf-8"))
        raise ParseError(f"{path}: no such file")
    return parse_topology(p.read_text(encoding="utf-8"))
