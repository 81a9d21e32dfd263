"""Price of anarchy and its network-aware analytic upper bound.

For each generator ``n`` the bound uses the smallest of three caps on what
``n`` can ever supply: its capacity, the demand left after every other
generator produces its minimum, and the local load plus the effective limits
of all lines leaving ``n``.  The bound is ``1 + max_n cap_n / ((N_g - 2) D)``;
dropping the network cap gives the network-independent bound.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.optimize import linprog

from .dispatch import DispatchResult, economic_dispatch, equilibrium_dispatch, polytope, true_cost
from .errors import InfeasibleError, ValidationError
from .network import BusId, Market
from .powerflow import ShiftFactors, shift_factors
from .topology import EffectiveLimits, cycle_decomposition, effective_flow_limits, neighbor_partition


@dataclass(frozen=True)
class BoundComponents:
    """The three supply caps of one generator and their minimum."""

    bus: BusId
    capacity: float
    residual_demand: float
    network: float

    @property
    def value(self) -> float:
        return min(self.capacity, self.residual_demand, self.network)

    @property
    def independent_value(self) -> float:
        return min(self.capacity, self.residual_demand)


@dataclass(frozen=True)
class Bound:
    value: float
    argmax: BusId
    components: tuple

    def __float__(self):
        return self.value


@dataclass(frozen=True, eq=False)
class PoaReport:
    poa: float
    cost_opt: float
    cost_eq: float
    bound_thm1: float
    bound_network_independent: float
    argmax_gen: BusId
    components: tuple
    optimum: DispatchResult
    equilibrium: DispatchResult

    def to_dict(self) -> dict:
        return {
            "poa": self.poa,
            "cost_opt": self.cost_opt,
            "cost_eq": self.cost_eq,
            "bound_thm1": self.bound_thm1,
            "bound_indep": self.bound_network_independent,
            "argmax_gen": self.argmax_gen,
            "components": [
                {"bus": c.bus, "capacity": c.capacity, "residual_demand": c.residual_demand,
                 "network": c.network, "min": c.value}
                for c in self.components
            ],
            "s_opt": self.optimum.supply_map,
            "s_eq": self.equilibrium.supply_map,
            "kkt_residual_opt": self.optimum.residual,
            "kkt_residual_eq": self.equilibrium.residual,
        }


def _ratio(m: Market, cap: float) -> float:
    """``1 + cap / ((N_g - 2) D)``, dividing by D first so cap = D gives 1/(N_g - 2) exactly."""
    G, D = m.n_generators, m.total_demand
    if G <= 2:
        raise ValidationError("the bound requires more than two generators")
    if D <= 0:
        raise ValidationError("the bound requires positive demand")
    return 1.0 + cap / D / (G - 2)


def default_partitions(m: Market) -> dict:
    """Deterministic neighbor partition of every generator bus."""
    dec = cycle_decomposition(m.network)
    return {n: neighbor_partition(m.network, n, dec) for n in m.gen_buses}


def effective_limits(m: Market, partitions: Mapping | None = None) -> dict:
    partitions = partitions or default_partitions(m)
    f = m.finite_limits()
    return {n: effective_flow_limits(m.network, partitions[n], f) for n in m.gen_buses}


def max_feasible_supply_bound(m: Market, n: BusId, el: EffectiveLimits) -> float:
    """Analytic cap on generator ``n``'s output.

    ``min(smax_n, D - sum_{m != n} smin_m, d_n + sum_m fhat_nm)``; never
    smaller than the true maximum feasible supply.
    """
    return bound_components(m, n, el).value


def bound_components(m: Market, n: BusId, el: EffectiveLimits) -> BoundComponents:
    g = m.generators[n]
    others = sum(x.smin for b, x in m.generators.items() if b != n)
    return BoundComponents(n, g.smax, m.total_demand - others, m.loads.get(n, 0.0) + el.total)


def _argmax(vals, buses):
    best = max(vals)
    k = next(i for i, v in enumerate(vals) if v == best)  # lowest index wins ties
    return best, buses[k]


def poa_upper_bound(m: Market, partitions: Mapping | None = None) -> Bound:
    """Network-aware bound ``1 + max_n cap_n / ((N_g - 2) D)``.

    ``partitions`` maps each generator bus to a ``NeighborPartition``; any
    valid choice gives a sound bound.  Unlimited lines enter the effective
    limits through a finite sentinel so they never bind.
    """
    _ratio(m, 0.0)
    els = effective_limits(m, partitions)
    comps = tuple(bound_components(m, n, els[n]) for n in m.gen_buses)
    best, arg = _argmax([c.value for c in comps], m.gen_buses)
    return Bound(_ratio(m, best), arg, comps)


def network_independent_bound(m: Market) -> Bound:
    """Bound ignoring the network: ``1 + max_n min(smax_n, D - sum_{m != n} smin_m) / K``."""
    _ratio(m, 0.0)
    comps = []
    D = m.total_demand
    tot_min = sum(g.smin for g in m.generators.values())
    for n, g in m.generators.items():
        comps.append(BoundComponents(n, g.smax, D - (tot_min - g.smin), float("inf")))
    best, arg = _argmax([c.independent_value for c in comps], m.gen_buses)
    return Bound(_ratio(m, best), arg, tuple(comps))


def max_feasible_supply(m: Market, n: BusId, sf: ShiftFactors | None = None):
    """Largest feasible output of generator ``n`` and a witnessing profile (LP)."""
    pol = polytope(m, sf)
    G = len(pol.smin)
    k = m.gen_buses.index(n)
    c = np.zeros(G)
    c[k] = -1.0
    fin = np.isfinite(pol.f)
    A_ub = np.vstack([pol.A_g[fin], -pol.A_g[fin]]) if fin.any() else None
    b_ub = np.r_[pol.f[fin] - pol.offset[fin], pol.f[fin] + pol.offset[fin]] if fin.any() else None
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=np.ones((1, G)), b_eq=[pol.D],
                  bounds=list(zip(pol.smin, pol.smax)), method="highs")
    if res.status != 0:
        raise InfeasibleError(f"maximum-supply program failed: {res.message}")
    return float(res.x[k]), res.x


def price_of_anarchy(m: Market, sf: ShiftFactors | None = None, partitions: Mapping | None = None,
                     tol: float = 1e-8) -> PoaReport:
    """Equilibrium cost over optimal cost, with both bounds attached."""
    sf = sf or shift_factors(m)
    opt = economic_dispatch(m, sf, tol)
    eq = equilibrium_dispatch(m, sf, tol)
    c_opt = true_cost(m, opt.supply)
    c_eq = true_cost(m, eq.supply)
    b1 = poa_upper_bound(m, partitions)
    b0 = network_independent_bound(m)
    return PoaReport(c_eq / c_opt, c_opt, c_eq, b1.value, b0.value, b1.argmax, b1.components, opt, eq)
