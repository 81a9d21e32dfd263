"""Random weakly-cyclic networks and markets for property tests and sweeps.

Networks are grown as cactus graphs: each step either hangs a new bus off
an existing one or closes a new cycle through an existing bus with fresh
buses only, so no line ever lies on two cycles.  Markets are built so that
every modelling assumption holds by construction: generator capacities are
redundant and flow limits sit strictly above the flows of an interior
reference dispatch.
"""
from __future__ import annotations

import numpy as np

from .costs import Linear, PiecewiseLinear, Quadratic
from .network import Generator, Line, Market, Network
from .powerflow import build_shift_factors


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def random_weakly_cyclic_network(n_buses: int, seed=None, cycle_prob: float = 0.4,
                                 max_cycle: int = 5, b_range=(0.5, 2.0)) -> Network:
    """Connected cactus network on buses ``1..n_buses`` with random susceptances."""
    if n_buses < 2:
        raise ValueError("a network needs at least two buses")
    rng = _rng(seed)
    edges = []
    n = 1
    while n < n_buses:
        anchor = int(rng.integers(1, n + 1))
        room = n_buses - n
        if room >= 2 and rng.random() < cycle_prob:
            k = int(rng.integers(2, min(max_cycle - 1, room) + 1))
            ring = [anchor] + list(range(n + 1, n + k + 1))
            edges += list(zip(ring, ring[1:] + ring[:1]))
            n += k
        else:
            edges.append((anchor, n + 1))
            n += 1
    lines = tuple(Line(a, b, float(rng.uniform(*b_range))) for a, b in edges)
    return Network(tuple(range(1, n_buses + 1)), lines)


def _random_cost(rng, kind: str):
    if kind == "linear":
        return Linear(float(rng.uniform(1.0, 5.0)))
    if kind == "quadratic":
        return Quadratic(float(rng.uniform(0.01, 0.5)), float(rng.uniform(1.0, 5.0)))
    if kind == "piecewise_linear":
        k = int(rng.integers(1, 4))
        bps = np.sort(rng.uniform(0.1, 3.0, size=k))
        slopes = np.cumsum(rng.uniform(0.2, 2.0, size=k + 1))
        return PiecewiseLinear(tuple(bps), tuple(slopes))
    raise ValueError(f"unknown cost kind {kind!r}")


def random_market(n_buses: int, seed=None, n_gen: int | None = None, cost_kinds=("linear", "quadratic"),
                  limit_margin=(0.05, 1.0), network: Network | None = None, smin_prob: float = 0.3) -> Market:
    """Random market on a weakly-cyclic network with every assumption satisfied.

    Limits are ``|F_ref| + margin * D / n_buses`` where ``F_ref`` are the
    flows of a dispatch strictly inside every capacity box, so the market is
    strictly feasible.  ``limit_margin`` is the range of the random margin.
    """
    rng = _rng(seed)
    net = network or random_weakly_cyclic_network(n_buses, rng)
    N = net.n_buses
    G = int(rng.integers(3, N + 1)) if n_gen is None else int(n_gen)
    if not 3 <= G <= N:
        raise ValueError("need between 3 and n_buses generators")
    gen_buses = sorted(int(x) for x in rng.choice(np.array(net.buses), size=G, replace=False))
    loads = {b: float(rng.uniform(0.2, 1.5)) for b in net.buses if rng.random() < 0.8}
    if not loads:
        loads = {net.buses[0]: 1.0}
    D = sum(loads.values())
    smax = rng.uniform(0.6, 1.2, size=G) * D
    smin = np.where(rng.random(G) < smin_prob, rng.uniform(0.0, 0.3, size=G) * D / G, 0.0)
    gens = {}
    for k, b in enumerate(gen_buses):
        gens[b] = Generator(float(smin[k]), float(smax[k]), _random_cost(rng, str(rng.choice(cost_kinds))))
    # interior reference dispatch and strictly larger limits
    s_ref = smin + (D - smin.sum()) * (smax - smin) / (smax - smin).sum()
    sf = build_shift_factors(net, gen_buses=gen_buses)
    d = np.array([loads.get(b, 0.0) for b in net.buses])
    flows = sf.A_g @ s_ref + sf.A_l @ d
    margin = rng.uniform(*limit_margin, size=net.n_lines) * D / N
    net = net.with_limits(np.abs(flows) + margin)
    return Market(net, loads, gens)


def synthetic_case(n_buses: int = 50, seed: int = 7, n_gen: int = 40) -> Market:
    """Deterministic quadratic-cost case used for the congestion sweep."""
    rng = np.random.default_rng(seed)
    net = random_weakly_cyclic_network(n_buses, rng, cycle_prob=0.35)
    return random_market(n_buses, rng, n_gen=n_gen, cost_kinds=("quadratic",), network=net,
                         limit_margin=(0.5, 2.0), smin_prob=0.0)
