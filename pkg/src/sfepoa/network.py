"""Immutable network and market data model."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .costs import CostFunction
from .errors import InvalidLineError, NetworkError, ValidationError

BusId = int
UNLIMITED = math.inf


@dataclass(frozen=True)
class Line:
    """Transmission line with susceptance ``b`` and thermal limit ``f``.

    Positive flow runs from ``from_bus`` to ``to_bus``.  ``f = inf`` means the
    line is unlimited.  ``f = 0`` is allowed and forces a zero flow; the
    tightness construction relies on such lines.
    """

    from_bus: BusId
    to_bus: BusId
    b: float = 1.0
    f: float = UNLIMITED

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise InvalidLineError(f"line {self.from_bus}-{self.to_bus} is a self-loop")
        if not (math.isfinite(self.b) and self.b > 0):
            raise InvalidLineError(
                f"line {self.from_bus}-{self.to_bus}: susceptance must be positive and finite, got {self.b}"
            )
        if math.isnan(self.f) or self.f < 0:
            raise InvalidLineError(f"line {self.from_bus}-{self.to_bus}: flow limit must be >= 0, got {self.f}")

    @property
    def unlimited(self) -> bool:
        return math.isinf(self.f)

    @property
    def ends(self) -> tuple:
        return (self.from_bus, self.to_bus)

    def other(self, bus: BusId) -> BusId:
        if bus == self.from_bus:
            return self.to_bus
        if bus == self.to_bus:
            return self.from_bus
        raise KeyError(bus)


@dataclass(frozen=True)
class Network:
    """Connected simple graph of buses and lines; line order is stable."""

    buses: tuple
    lines: tuple

    def __post_init__(self):
        buses = tuple(int(b) for b in self.buses)
        lines = tuple(self.lines)
        object.__setattr__(self, "buses", buses)
        object.__setattr__(self, "lines", lines)
        if len(set(buses)) != len(buses):
            raise NetworkError("duplicate bus ids")
        if not buses:
            raise NetworkError("network has no buses")
        known = set(buses)
        seen = {}
        for k, ln in enumerate(lines):
            if ln.from_bus not in known or ln.to_bus not in known:
                raise NetworkError(f"line {k} ({ln.from_bus}-{ln.to_bus}) references an unknown bus")
            key = frozenset(ln.ends)
            if key in seen:
                raise NetworkError(
                    f"parallel lines {seen[key]} and {k} between buses {ln.from_bus} and {ln.to_bus}"
                )
            seen[key] = k
        if not self._connected():
            raise NetworkError("network is not connected")

    def _connected(self) -> bool:
        adj = self.adjacency
        start = self.buses[0]
        stack, seen = [start], {start}
        while stack:
            u = stack.pop()
            for v, _ in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == len(self.buses)

    @cached_property
    def index(self) -> Mapping:
        """Bus id -> position in ``buses``."""
        return MappingProxyType({b: k for k, b in enumerate(self.buses)})

    @cached_property
    def adjacency(self) -> Mapping:
        """Bus id -> tuple of (neighbor, line index) in line order."""
        adj = {b: [] for b in self.buses}
        for k, ln in enumerate(self.lines):
            adj[ln.from_bus].append((ln.to_bus, k))
            adj[ln.to_bus].append((ln.from_bus, k))
        return MappingProxyType({b: tuple(v) for b, v in adj.items()})

    @cached_property
    def _line_lookup(self) -> Mapping:
        return MappingProxyType({frozenset(ln.ends): k for k, ln in enumerate(self.lines)})

    def neighbors(self, n: BusId) -> tuple:
        return tuple(sorted(v for v, _ in self.adjacency[n]))

    def line_index(self, i: BusId, j: BusId) -> int:
        return self._line_lookup[frozenset((i, j))]

    def line_between(self, i: BusId, j: BusId) -> Line:
        return self.lines[self.line_index(i, j)]

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    def susceptances(self) -> np.ndarray:
        return np.array([ln.b for ln in self.lines], dtype=float)

    def limits(self) -> np.ndarray:
        """Flow limits with ``inf`` for unlimited lines."""
        return np.array([ln.f for ln in self.lines], dtype=float)

    def with_limits(self, limits: Sequence[float]) -> "Network":
        limits = list(limits)
        if len(limits) != len(self.lines):
            raise ValueError("one limit per line expected")
        return Network(self.buses, tuple(replace(ln, f=float(f)) for ln, f in zip(self.lines, limits)))

    def with_susceptances(self, b: Sequence[float]) -> "Network":
        return Network(self.buses, tuple(replace(ln, b=float(x)) for ln, x in zip(self.lines, b)))


@dataclass(frozen=True)
class Generator:
    """Generator with capacity box ``[smin, smax]`` and a convex cost."""

    smin: float
    smax: float
    cost: CostFunction

    def __post_init__(self):
        if not (math.isfinite(self.smin) and math.isfinite(self.smax)):
            raise ValidationError("generator capacity bounds must be finite")
        if self.smin < 0 or self.smax <= self.smin:
            raise ValidationError(f"generator needs 0 <= smin < smax, got [{self.smin}, {self.smax}]")
        if not isinstance(self.cost, CostFunction):
            raise TypeError("generator cost must be a CostFunction")


@dataclass(frozen=True)
class Market:
    """Network plus loads and single-owner generators (one per bus).

    Loads default to zero on buses that are not listed.  The total demand is
    always recomputed from the loads.
    """

    network: Network
    loads: Mapping
    generators: Mapping

    def __post_init__(self):
        known = set(self.network.buses)
        loads = {}
        for b, v in dict(self.loads).items():
            b = int(b)
            v = float(v)
            if b not in known:
                raise ValidationError(f"load at unknown bus {b}")
            if not math.isfinite(v) or v < 0:
                raise ValidationError(f"load at bus {b} must be finite and >= 0, got {v}")
            loads[b] = v
        gens = {}
        for b, g in dict(self.generators).items():
            b = int(b)
            if b not in known:
                raise ValidationError(f"generator at unknown bus {b}")
            if not isinstance(g, Generator):
                raise TypeError("generators must map bus ids to Generator objects")
            gens[b] = g
        object.__setattr__(self, "loads", MappingProxyType(dict(sorted(loads.items()))))
        object.__setattr__(self, "generators", MappingProxyType(dict(sorted(gens.items()))))

    @property
    def total_demand(self) -> float:
        return total_demand(self)

    @property
    def gen_buses(self) -> tuple:
        return tuple(self.generators)

    @property
    def n_generators(self) -> int:
        return len(self.generators)

    def load_vector(self) -> np.ndarray:
        """Loads ordered like ``network.buses``."""
        return np.array([self.loads.get(b, 0.0) for b in self.network.buses], dtype=float)

    def smin(self) -> np.ndarray:
        return np.array([g.smin for g in self.generators.values()], dtype=float)

    def smax(self) -> np.ndarray:
        return np.array([g.smax for g in self.generators.values()], dtype=float)

    def costs(self) -> list:
        return [g.cost for g in self.generators.values()]

    @property
    def flow_sentinel(self) -> float:
        """Finite stand-in for unlimited lines; exceeds any achievable flow."""
        return float(self.smax().sum() + self.total_demand + 1.0)

    def finite_limits(self) -> np.ndarray:
        f = self.network.limits()
        return np.where(np.isinf(f), self.flow_sentinel, f)

    def with_network(self, net: Network) -> "Market":
        return Market(net, self.loads, self.generators)

    def with_limits(self, limits: Sequence[float]) -> "Market":
        return self.with_network(self.network.with_limits(limits))

    def scale_limits(self, scale: float) -> "Market":
        """Uniformly scale every finite flow limit."""
        return self.with_limits(self.network.limits() * float(scale))

    def supply_map(self, s: Sequence[float]) -> dict:
        return dict(zip(self.gen_buses, (float(x) for x in s)))


def total_demand(m: Market) -> float:
    """Sum of all loads; zero for an unloaded market."""
    return float(math.fsum(m.loads.values()))


def make_market(
    buses: Iterable[BusId],
    lines: Iterable,
    loads: Mapping,
    generators: Mapping,
) -> Market:
    """Convenience constructor from plain tuples.

    ``lines`` holds ``(from, to, b, f)`` tuples or ``Line`` objects and
    ``generators`` maps bus -> ``(smin, smax, cost)`` or ``Generator``.
    """
    ln = tuple(x if isinstance(x, Line) else Line(*x) for x in lines)
    gens = {b: g if isinstance(g, Generator) else Generator(*g) for b, g in generators.items()}
    return Market(Network(tuple(buses), ln), loads, gens)
