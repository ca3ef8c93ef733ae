"""Minimum spanning tree over the switch graph, rooted orientation, and tree paths."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

from .errors import DisconnectedGraph, TooLarge, UnknownNode, UnknownRoot, ValidationError
from .topology import Link, Topology

MAX_ENUMERATION_SWITCHES = 8


class UnionFind:
    def __init__(self, items: Iterable[str]):
        self.parent = {x: x for x in items}
        self.rank = {x: 0 for x in self.parent}

    def find(self, x: str) -> str:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: str, b: str) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


@dataclass(frozen=True)
class EdgeSet:
    """Tree edges between switches, each carrying the concrete link chosen."""

    links: frozenset[Link]

    def __iter__(self):
        return iter(sorted(self.links, key=Link.sort_key))

    def __len__(self):
        return len(self.links)

    def pairs(self) -> set[frozenset[str]]:
        return {frozenset(l.nodes) for l in self.links}

    def sort_keys(self) -> list[tuple]:
        return sorted(l.sort_key() for l in self.links)


def total_weight(mst: EdgeSet | Iterable[Link]) -> Fraction:
    links = mst.links if isinstance(mst, EdgeSet) else mst
    return sum((l.weight for l in links), Fraction(0))


def switch_distances(t: Topology, root: str) -> dict[str, int]:
    """Hop counts from ``root`` (or a host root's switch) over switch links."""
    if root not in t.nodes:
        raise UnknownRoot(f"unknown root {root!r}")
    if t.nodes[root].is_host:
        root = t.attachment(root)[1].node
    adj: dict[str, set[str]] = {s: set() for s in t.switches()}
    for link in t.switch_links():
        u, v = link.nodes
        adj[u].add(v)
        adj[v].add(u)
    dist = {root: 0}
    frontier = [root]
    while frontier:
        nxt = []
        for u in frontier:
            for v in sorted(adj[u]):
                if v not in dist:
                    dist[v] = dist[u] + 1
                    nxt.append(v)
        frontier = nxt
    return dist


def edge_order(t: Topology, root: str | None = None):
    """Sort key for Kruskal.

    Without a root: (weight, endpoint names, ports). With a root, equal
    weights are broken first by the edge's hop distance from the root, so
    ties resolve toward a shallower tree around the collection point.
    """
    if root is None:
        return Link.sort_key
    dist = switch_distances(t, root)
    far = len(dist) + 1

    def key(link: Link):
        w, *rest = link.sort_key()
        return (w, min(dist.get(n, far) for n in link.nodes), *rest)

    return key


def compute_mst(t: Topology, root: str | None = None) -> EdgeSet:
    """Kruskal over switch-to-switch links.

    The scan order (:func:`edge_order`) is total, so equal weights always
    resolve to the same tree for a given root.
    """
    switches = t.switches()
    uf = UnionFind(switches)
    chosen = []
    for link in sorted(t.switch_links(), key=edge_order(t, root)):
        if uf.union(*link.nodes):
            chosen.append(link)
            if len(chosen) == len(switches) - 1:
                break
    if len(chosen) != len(switches) - 1:
        raise DisconnectedGraph(f"switch graph is disconnected ({len(switches)} switches, {len(chosen)} tree edges)")
    return EdgeSet(frozenset(chosen))


def enumerate_spanning_trees(t: Topology) -> list[EdgeSet]:
    """Every spanning tree of the switch graph, by include/exclude backtracking.

    Parallel links yield distinct trees. Guarded to small graphs.
    """
    switches = t.switches()
    if len(switches) > MAX_ENUMERATION_SWITCHES:
        raise TooLarge(f"{len(switches)} switches exceeds enumeration limit {MAX_ENUMERATION_SWITCHES}")
    links = sorted(t.switch_links(), key=Link.sort_key)
    need = len(switches) - 1
    found: list[EdgeSet] = []

    def rec(i: int, picked: list[Link], comp: dict[str, int]):
        if len(picked) == need:
            found.append(EdgeSet(frozenset(picked)))
            return
        if len(links) - i < need - len(picked):
            return
        link = links[i]
        u, v = link.nodes
        cu, cv = comp[u], comp[v]
        if cu != cv:
            merged = {k: (cu if c == cv else c) for k, c in comp.items()}
            picked.append(link)
            rec(i + 1, picked, merged)
            picked.pop()
        rec(i + 1, picked, comp)

    rec(0, [], {s: k for k, s in enumerate(switches)})
    return found


@dataclass(frozen=True)
class ParentLink:
    parent: str
    egress_port: int  # on the child, toward the parent
    parent_port: int  # on the parent, facing the child


@dataclass(frozen=True)
class SpanningTree:
    """MST oriented at ``root``; hosts hang off their attachment switches."""

    root: str
    parent: Mapping[str, ParentLink]
    edges: EdgeSet

    @property
    def nodes(self) -> list[str]:
        return sorted({self.root, *self.parent})

    def children(self, node: str) -> list[str]:
        return sorted(c for c, pl in self.parent.items() if pl.parent == node)

    def ancestors(self, node: str) -> list[str]:
        """``node`` followed by each parent up to and including the root."""
        if node != self.root and node not in self.parent:
            raise UnknownNode(f"{node!r} is not in the tree")
        chain = [node]
        while chain[-1] != self.root:
            chain.append(self.parent[chain[-1]].parent)
            if len(chain) > len(self.parent) + 1:
                raise ValidationError("parent pointers contain a cycle")
        return chain

    def port_toward(self, node: str, neighbor: str) -> int:
        """Local port on ``node`` for the tree edge to adjacent ``neighbor``."""
        pl = self.parent.get(node)
        if pl is not None and pl.parent == neighbor:
            return pl.egress_port
        pl = self.parent.get(neighbor)
        if pl is not None and pl.parent == node:
            return pl.parent_port
        raise ValidationError(f"{node} and {neighbor} are not adjacent in the tree")


def orient_tree(t: Topology, mst: EdgeSet, root: str) -> SpanningTree:
    """Root ``mst`` at ``root``; a host root resolves to its attachment switch."""
    if root not in t.nodes:
        raise UnknownRoot(f"unknown root {root!r}")
    if t.nodes[root].is_host:
        root = t.attachment(root)[1].node

    adj: dict[str, list[Link]] = {s: [] for s in t.switches()}
    for link in mst:
        for n in link.nodes:
            if n not in adj:
                raise ValidationError(f"tree edge {link} touches non-switch {n}")
            adj[n].append(link)

    parent: dict[str, ParentLink] = {}
    seen = {root}
    stack = [root]
    while stack:
        cur = stack.pop()
        for link in adj[cur]:
            far = link.other(cur)
            if far.node in seen:
                continue
            seen.add(far.node)
            parent[far.node] = ParentLink(cur, far.port, link.end_at(cur).port)
            stack.append(far.node)
    missing = set(adj) - seen
    if missing:
        raise ValidationError(f"tree does not span switches {sorted(missing)}")

    for h in t.hosts():
        local, sw = t.attachment(h)
        parent[h] = ParentLink(sw.node, local.port, sw.port)
    return SpanningTree(root, parent, mst)


def tree_path(tree: SpanningTree, src: str, dst: str) -> list[str]:
    up = tree.ancestors(src)
    down = tree.ancestors(dst)
    on_down = {n: i for i, n in enumerate(down)}
    for i, n in enumerate(up):
        if n in on_down:
            return up[: i + 1] + list(reversed(down[: on_down[n]]))
    raise ValidationError(f"no tree path between {src} and {dst}")
