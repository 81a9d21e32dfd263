"""Graph analysis: cycles, neighbor partitions, effective limits, tree centers."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping, Sequence

import networkx as nx
import numpy as np

from .network import BusId, Network


@dataclass(frozen=True)
class Cycle:
    """Simple cycle as a closed walk.

    ``nodes[k]`` and ``nodes[k+1]`` (cyclically) are joined by line
    ``edges[k]``; ``signs[k]`` is +1 when the walk follows the line's stored
    direction.
    """

    nodes: tuple
    edges: tuple
    signs: tuple

    def __contains__(self, bus) -> bool:
        return bus in self.nodes

    @property
    def edge_set(self) -> frozenset:
        return frozenset(self.edges)

    def neighbors_of(self, n: BusId) -> tuple:
        """The two cycle neighbors of ``n``, in increasing order."""
        k = self.nodes.index(n)
        a, b = self.nodes[k - 1], self.nodes[(k + 1) % len(self.nodes)]
        return tuple(sorted((a, b)))

    def __str__(self):
        return "-".join(str(x) for x in self.nodes + self.nodes[:1])


@dataclass(frozen=True)
class Component:
    """Biconnected component: ``kind`` is 'bridge', 'cycle' or 'complex'."""

    nodes: frozenset
    edges: tuple
    kind: str
    cycle: Cycle | None = None


@dataclass(frozen=True)
class CycleDecomposition:
    components: tuple
    is_weakly_cyclic: bool
    #: simple-cycle components for weakly-cyclic graphs, otherwise the
    #: fundamental cycles of the deterministic spanning tree
    cycles: tuple


@dataclass(frozen=True)
class NeighborPartition:
    """Singletons and duples over N(n) with a cycle per duple."""

    node: BusId
    parts: tuple
    assignment: Mapping
    valid: bool = True
    violations: tuple = ()

    def part_of(self, m: BusId) -> tuple:
        for p in self.parts:
            if m in p:
                return p
        raise KeyError(m)


@dataclass(frozen=True)
class EffectiveLimits:
    node: BusId
    limits: Mapping

    @property
    def total(self) -> float:
        return math.fsum(self.limits.values())


@dataclass(frozen=True, eq=False)
class Tree:
    """Spanning tree given by a subset of network line indices."""

    network: Network
    edges: tuple

    @property
    def nodes(self) -> tuple:
        return self.network.buses

    def adjacency(self) -> dict:
        adj = {b: [] for b in self.network.buses}
        for k in self.edges:
            ln = self.network.lines[k]
            adj[ln.from_bus].append((ln.to_bus, k))
            adj[ln.to_bus].append((ln.from_bus, k))
        for b in adj:
            adj[b].sort()
        return adj

    def rooted(self, root: BusId) -> "RootedTree":
        adj = self.adjacency()
        parent = {root: None}
        parent_edge = {root: None}
        order = [root]
        for u in order:
            for v, k in adj[u]:
                if v not in parent:
                    parent[v] = u
                    parent_edge[v] = k
                    order.append(v)
        children = {b: [] for b in order}
        for v in order[1:]:
            children[parent[v]].append(v)
        size = {b: 1 for b in order}
        for v in reversed(order[1:]):
            size[parent[v]] += size[v]
        return RootedTree(self, root, parent, parent_edge, children, size, tuple(order))

    def eccentricity(self, n: BusId) -> int:
        dist = _bfs(self.adjacency(), n)
        return max(dist.values())


@dataclass(frozen=True, eq=False)
class RootedTree:
    tree: Tree
    root: BusId
    parent: Mapping
    parent_edge: Mapping
    children: Mapping
    #: number of nodes in the subtree rooted at each node (itself included)
    size: Mapping
    order: tuple

    def descendants(self, n: BusId) -> int:
        """|H(n)|: number of strict descendants."""
        return self.size[n] - 1

    def path_to_root(self, n: BusId) -> list:
        out = [n]
        while self.parent[out[-1]] is not None:
            out.append(self.parent[out[-1]])
        return out

    def is_ancestor(self, a: BusId, b: BusId) -> bool:
        return a in self.path_to_root(b)

    def branch(self, n: BusId) -> BusId | None:
        """Child of the root whose subtree contains ``n`` (None for the root)."""
        path = self.path_to_root(n)
        return path[-2] if len(path) > 1 else None


def _bfs(adj, start) -> dict:
    dist = {start: 0}
    q = deque([start])
    while q:
        u = q.popleft()
        for v, _ in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def spanning_tree(net: Network) -> Tree:
    """Kruskal's rule taking lines in index order (lowest index first)."""
    parent = {b: b for b in net.buses}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    edges = []
    for k, ln in enumerate(net.lines):
        ra, rb = find(ln.from_bus), find(ln.to_bus)
        if ra != rb:
            parent[ra] = rb
            edges.append(k)
    return Tree(net, tuple(edges))


def tree_center(t: Tree) -> BusId:
    """Node of minimum eccentricity; the lower id when the tree is bicentral.

    Uses the double-BFS diameter path: the centre(s) are its middle node(s).
    """
    adj = t.adjacency()
    start = min(t.nodes)
    d0 = _bfs(adj, start)
    u = min(b for b in d0 if d0[b] == max(d0.values()))
    du = _bfs(adj, u)
    far = max(du.values())
    v = min(b for b in du if du[b] == far)
    # recover the u-v path
    rooted = t.rooted(u)
    path = rooted.path_to_root(v)
    mids = {path[far // 2], path[(far + 1) // 2]}
    return min(mids)


def fundamental_cycles(net: Network, tree: Tree | None = None) -> tuple:
    """One cycle per chord of ``tree``, in chord index order."""
    tree = tree or spanning_tree(net)
    in_tree = set(tree.edges)
    root = min(net.buses)
    rt = tree.rooted(root)
    cycles = []
    for k, ln in enumerate(net.lines):
        if k in in_tree:
            continue
        a, b = ln.from_bus, ln.to_bus
        pa, pb = rt.path_to_root(a), rt.path_to_root(b)
        common = set(pa) & set(pb)
        lca = next(x for x in pa if x in common)
        # a up to the lowest common ancestor, then down to b; the chord closes it
        walk = pa[: pa.index(lca) + 1] + list(reversed(pb[: pb.index(lca)]))
        cycles.append(_cycle_from_nodes(net, walk))
    return tuple(cycles)


def _cycle_from_nodes(net: Network, nodes: Sequence[BusId]) -> Cycle:
    """Canonical cycle: start at the lowest id, go toward the smaller neighbor."""
    nodes = list(nodes)
    k = nodes.index(min(nodes))
    nodes = nodes[k:] + nodes[:k]
    if len(nodes) > 2 and nodes[-1] < nodes[1]:
        nodes = [nodes[0]] + list(reversed(nodes[1:]))
    edges, signs = [], []
    for i, a in enumerate(nodes):
        b = nodes[(i + 1) % len(nodes)]
        e = net.line_index(a, b)
        edges.append(e)
        signs.append(1.0 if net.lines[e].from_bus == a else -1.0)
    return Cycle(tuple(nodes), tuple(edges), tuple(signs))


def _walk_component(net: Network, nodes, edges) -> list:
    adj = {b: [] for b in nodes}
    for e in edges:
        a, b = net.lines[e].ends
        adj[a].append(b)
        adj[b].append(a)
    start = min(nodes)
    walk = [start]
    prev, cur = None, start
    while True:
        nxt = [x for x in sorted(adj[cur]) if x != prev]
        if not nxt or nxt[0] == start or len(walk) == len(nodes):
            break
        prev, cur = cur, nxt[0]
        walk.append(cur)
    return walk


def cycle_decomposition(net: Network) -> CycleDecomposition:
    """Biconnected components classified as bridge, simple cycle or complex."""
    g = nx.Graph()
    g.add_nodes_from(net.buses)
    for k, ln in enumerate(net.lines):
        g.add_edge(ln.from_bus, ln.to_bus, index=k)
    comps = []
    for comp_edges in nx.biconnected_component_edges(g):
        idx = tuple(sorted(net.line_index(a, b) for a, b in comp_edges))
        nodes = frozenset(x for e in idx for x in net.lines[e].ends)
        if len(idx) == 1:
            comps.append(Component(nodes, idx, "bridge"))
        elif len(idx) == len(nodes):
            cyc = _cycle_from_nodes(net, _walk_component(net, nodes, idx))
            comps.append(Component(nodes, idx, "cycle", cyc))
        else:
            comps.append(Component(nodes, idx, "complex"))
    comps.sort(key=lambda c: c.edges[0])
    weakly = all(c.kind != "complex" for c in comps)
    if weakly:
        cycles = tuple(c.cycle for c in comps if c.kind == "cycle")
    else:
        cycles = fundamental_cycles(net)
    return CycleDecomposition(tuple(comps), weakly, cycles)


def _connected_without(net: Network, n: BusId, i: BusId, j: BusId) -> bool:
    adj = net.adjacency
    seen = {i, n}
    stack = [i]
    while stack:
        u = stack.pop()
        for v, _ in adj[u]:
            if v == j:
                return True
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return False


def neighbor_partition(net: Network, n: BusId, dec: CycleDecomposition | None = None) -> NeighborPartition:
    """Deterministic partition of the neighbors of ``n`` into singletons and duples.

    Cycles through ``n`` are scanned in order; a cycle pairs the two
    neighbors of ``n`` on it when both are still unpaired and the cycle shares
    no line with cycles already used for ``n``.  On weakly-cyclic graphs this
    pairs exactly the neighbors lying on a common cycle and the result is
    always valid.  Elsewhere the singleton condition (no two singletons on a
    common cycle with ``n``, i.e. connected once ``n`` is removed) is checked
    and reported through ``valid``; effective limits of singletons fall back
    to the plain line limits, which keeps the bound sound.
    """
    dec = dec or cycle_decomposition(net)
    nbrs = net.neighbors(n)
    paired = set()
    used_edges = set()
    parts, assignment = [], {}
    for cyc in dec.cycles:
        if n not in cyc:
            continue
        i, j = cyc.neighbors_of(n)
        if i in paired or j in paired or (cyc.edge_set & used_edges):
            continue
        paired.update((i, j))
        used_edges |= cyc.edge_set
        parts.append((i, j))
        assignment[(i, j)] = cyc
    singles = [m for m in nbrs if m not in paired]
    parts.extend((m,) for m in singles)
    parts.sort()
    violations = []
    if not dec.is_weakly_cyclic:
        for a in range(len(singles)):
            for b in range(a + 1, len(singles)):
                if _connected_without(net, n, singles[a], singles[b]):
                    violations.append(f"singletons {singles[a]} and {singles[b]} share a cycle with {n}")
    return NeighborPartition(n, tuple(parts), MappingProxyType(assignment), not violations, tuple(violations))


def check_partition(net: Network, part: NeighborPartition) -> list:
    """List every violated partition condition (empty when valid)."""
    problems = []
    n = part.node
    nbrs = set(net.neighbors(n))
    covered = [m for p in part.parts for m in p]
    if sorted(covered) != sorted(nbrs):
        problems.append("parts do not partition the neighbor set exactly")
    used = set()
    for p in part.parts:
        if len(p) == 2:
            cyc = part.assignment.get(p)
            if cyc is None or n not in cyc or set(cyc.neighbors_of(n)) != set(p):
                problems.append(f"duple {p} is not adjacent to {n} on its assigned cycle")
                continue
            if cyc.edge_set & used:
                problems.append(f"cycle of duple {p} shares a line with another duple's cycle")
            used |= cyc.edge_set
    singles = [p[0] for p in part.parts if len(p) == 1]
    for a in range(len(singles)):
        for b in range(a + 1, len(singles)):
            if _connected_without(net, n, singles[a], singles[b]):
                problems.append(f"singletons {singles[a]} and {singles[b]} share a cycle with {n}")
    return problems


def effective_flow_limits(net: Network, part: NeighborPartition, limits: Sequence[float] | None = None) -> EffectiveLimits:
    """Effective export limits from ``part.node`` to each neighbor.

    For a singleton ``m`` the limit is the line limit.  For a duple ``{m, i}``
    on cycle ``C`` it is ``min(f_nm, B_nm * sum f_jk / B_jk)`` where the sum
    runs over every line of ``C`` other than ``(n, m)``.  ``limits`` overrides
    the network's limits, e.g. to replace ``inf`` by a finite sentinel.
    Singletons of a partition flagged invalid use their plain limits, which
    is the definition's singleton case anyway.
    """
    f = net.limits() if limits is None else np.asarray(limits, dtype=float)
    bvec = net.susceptances()
    n = part.node
    out = {}
    for p in part.parts:
        if len(p) == 1:
            m = p[0]
            out[m] = float(f[net.line_index(n, m)])
            continue
        cyc = part.assignment[p]
        for m in p:
            e_nm = net.line_index(n, m)
            others = [e for e in cyc.edges if e != e_nm]
            alt = bvec[e_nm] * float(np.sum(f[others] / bvec[others]))
            out[m] = float(min(f[e_nm], alt))
    return EffectiveLimits(n, MappingProxyType(dict(sorted(out.items()))))


def is_weakly_cyclic(net: Network) -> bool:
    return cycle_decomposition(net).is_weakly_cyclic
