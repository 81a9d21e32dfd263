import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import network_from_edges, t3_market
from sfepoa.costs import Linear
from sfepoa.errors import ValidationError
from sfepoa.network import Generator, Market, make_market
from sfepoa.poa import (
    bound_components,
    effective_limits,
    max_feasible_supply,
    max_feasible_supply_bound,
    network_independent_bound,
    poa_upper_bound,
    price_of_anarchy,
)
from sfepoa.synthetic import random_market, random_weakly_cyclic_network
from sfepoa.tightness import TightnessParams, build_instance


def test_t3_report():
    rep = price_of_anarchy(t3_market())
    assert rep.poa == pytest.approx(1.1, abs=1e-6)
    assert rep.cost_opt == pytest.approx(3.0, abs=1e-9)
    assert rep.cost_eq == pytest.approx(3.3, abs=1e-9)
    assert rep.bound_thm1 == 2.0
    assert rep.bound_network_independent == 2.0
    assert rep.argmax_gen == 1
    doc = rep.to_dict()
    assert doc["bound_thm1"] == 2.0 and len(doc["components"]) == 3


def test_symmetric_poa_is_one():
    assert price_of_anarchy(t3_market(costs=(1.0, 1.0, 1.0))).poa == pytest.approx(1.0, abs=1e-9)


def test_t3_components_large_limits():
    m = t3_market()
    el = effective_limits(m)
    c = bound_components(m, 1, el[1])
    assert (c.capacity, c.residual_demand, c.network) == (3.0, 3.0, 21.0)
    assert max_feasible_supply_bound(m, 1, el[1]) == 3.0


def test_t3_congested_bound_and_witness():
    m = t3_market(0.5)
    el = effective_limits(m)
    assert max_feasible_supply_bound(m, 1, el[1]) == 2.0
    assert poa_upper_bound(m).value == pytest.approx(5 / 3, abs=1e-12)
    assert network_independent_bound(m).value == 2.0
    s1, witness = max_feasible_supply(m, 1)
    assert s1 == pytest.approx(2.0, abs=1e-9)
    assert witness == pytest.approx([2.0, 0.5, 0.5], abs=1e-9)


def test_minimum_outputs_cap_residual_demand():
    m = make_market([1, 2, 3], [(1, 2), (2, 3), (1, 3)], {1: 1.0, 2: 1.0, 3: 1.0},
                    {1: (0, 3, Linear(1)), 2: (1, 3, Linear(1)), 3: (1, 3, Linear(1))})
    c = bound_components(m, 1, effective_limits(m)[1])
    assert c.residual_demand == 1.0 and c.value == 1.0


def test_star_closed_form_bound():
    inst = build_instance(network_from_edges([(1, 2), (1, 3), (1, 4)]), TightnessParams(4, 4.0, 3.0, 0.1, 2.4))
    assert poa_upper_bound(inst.market).value == pytest.approx(1.425, abs=1e-15)
    assert price_of_anarchy(inst.market).poa == pytest.approx(inst.analytic_poa, abs=1e-6)


@pytest.mark.parametrize("G", range(3, 11))
def test_special_case_reduction(G):
    D = float(G)
    edges = [(k, k + 1) for k in range(1, G)]
    m = make_market(range(1, G + 1), [(a, b, 1.0, math.inf) for a, b in edges], {b: 1.0 for b in range(1, G + 1)},
                    {b: (0.0, D, Linear(1.0 + 0.1 * b)) for b in range(1, G + 1)})
    assert poa_upper_bound(m).value == 1 + 1 / (G - 2)
    assert network_independent_bound(m).value == 1 + 1 / (G - 2)


def test_two_generators_rejected():
    m = make_market([1, 2], [(1, 2)], {1: 1.0}, {1: (0, 3, Linear(1)), 2: (0, 3, Linear(1))})
    with pytest.raises(ValidationError):
        poa_upper_bound(m)
    with pytest.raises(ValidationError):
        network_independent_bound(m)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_soundness_chain(seed):
    m = random_market(int(np.random.default_rng(seed).integers(4, 15)), seed)
    rep = price_of_anarchy(m)
    assert 1 - 1e-9 <= rep.poa <= rep.bound_thm1 + 1e-9
    assert rep.bound_thm1 <= rep.bound_network_independent + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_relaxation_dominates_true_max_supply(seed):
    m = random_market(int(np.random.default_rng(seed).integers(4, 12)), seed)
    els = effective_limits(m)
    for n in m.gen_buses:
        s, _ = max_feasible_supply(m, n)
        assert max_feasible_supply_bound(m, n, els[n]) >= s - 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.floats(1.0, 3.0))
def test_bound_monotone_in_capacity_and_limits(seed, factor):
    m = random_market(8, seed)
    base = poa_upper_bound(m).value
    n = m.gen_buses[0]
    g = m.generators[n]
    gens = dict(m.generators)
    gens[n] = Generator(g.smin, g.smax * factor, g.cost)
    assert poa_upper_bound(Market(m.network, m.loads, gens)).value >= base - 1e-15
    assert poa_upper_bound(m.scale_limits(factor)).value >= base - 1e-15


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 100_000))
def test_bound_decreases_with_more_generators(seed):
    rng = np.random.default_rng(seed)
    net = random_weakly_cyclic_network(10, rng)
    m = random_market(10, rng, n_gen=5, network=net)
    spare = [b for b in net.buses if b not in m.generators]
    gens = dict(m.generators)
    # a tiny extra generator leaves every component unchanged but raises G
    gens[spare[0]] = Generator(0.0, 1e-6, Linear(1.0))
    m2 = Market(m.network, m.loads, gens)
    assert poa_upper_bound(m2).value < poa_upper_bound(m).value
