import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import network_from_edges, t3_market
from sfepoa.errors import NetworkError, PowerFlowError, UnsupportedTopologyError
from sfepoa.network import Line, Network
from sfepoa.powerflow import (
    build_shift_factors,
    incidence_matrix,
    injection_flows,
    line_flows,
    shift_factors,
    tree_cycle_flows,
)
from sfepoa.synthetic import random_weakly_cyclic_network
from sfepoa.topology import cycle_decomposition

TRI = network_from_edges([(1, 2), (2, 3), (1, 3)])


def balanced(rng, n):
    x = rng.normal(size=n)
    return x - x.mean()


def test_two_bus_single_path():
    net = Network((1, 2), (Line(1, 2, 3.0),))
    sf = build_shift_factors(net, slack=2)
    assert injection_flows(sf, {1: 1.0, 2: -1.0}) == pytest.approx([1.0])


def test_triangle_split():
    sf = build_shift_factors(TRI, slack=3)
    flows = injection_flows(sf, {1: 1.0, 2: -1.0})
    # lines (1,2), (2,3), (1,3): 2/3 direct, 1/3 along 1-3-2
    assert flows == pytest.approx([2 / 3, -1 / 3, 1 / 3], abs=1e-12)
    assert tree_cycle_flows(TRI, {1: 1.0, 2: -1.0}) == pytest.approx(flows, abs=1e-12)


def test_t3_flows():
    m = t3_market()
    sf = shift_factors(m)
    assert line_flows(sf, [3.0, 0.0, 0.0], m.load_vector()) == pytest.approx([1.0, 0.0, 1.0], abs=1e-12)
    assert line_flows(sf, [1.0, 1.0, 1.0], m.load_vector()) == pytest.approx([0.0, 0.0, 0.0], abs=1e-12)
    assert line_flows(sf, {1: 3.0}, {1: 1.0, 2: 1.0, 3: 1.0}) == pytest.approx([1.0, 0.0, 1.0], abs=1e-12)


def test_unbalanced_profile_rejected():
    m = t3_market()
    sf = shift_factors(m)
    with pytest.raises(PowerFlowError, match="unbalanced"):
        line_flows(sf, [3.0, 1.0, 0.0], m.load_vector())
    with pytest.raises(PowerFlowError):
        tree_cycle_flows(TRI, [1.0, 0.0, 0.0])
    with pytest.raises(PowerFlowError):
        line_flows(sf, [1.0, 2.0], m.load_vector())
    with pytest.raises(PowerFlowError):
        line_flows(sf, {9: 1.0}, m.load_vector())


def test_bad_slack_rejected():
    with pytest.raises(NetworkError):
        build_shift_factors(TRI, slack=7)


def test_tree_flow_is_subtree_injection():
    net = network_from_edges([(1, 2), (2, 3), (2, 4), (4, 5)])
    inj = np.array([-4.0, 1.0, 0.5, 1.5, 1.0])
    flows = tree_cycle_flows(net, inj)
    # line (2,4) carries the injection of the subtree {4, 5} towards bus 2
    assert flows[2] == pytest.approx(-(1.5 + 1.0))
    assert flows[0] == pytest.approx(-(1.0 + 0.5 + 1.5 + 1.0))


def test_non_weakly_cyclic_rejected():
    k4 = network_from_edges([(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)])
    with pytest.raises(UnsupportedTopologyError):
        tree_cycle_flows(k4, [1.0, -1.0, 0.0, 0.0])


def test_bridge_rows_are_indicator():
    net = network_from_edges([(1, 2), (2, 3), (1, 3), (3, 4)])
    sf = build_shift_factors(net, slack=1)
    row = sf.ptdf[3]  # the bridge 3-4 separates {4} from the slack side
    assert row == pytest.approx([0.0, 0.0, 0.0, -1.0], abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 25), st.integers(0, 10_000))
def test_cross_oracle_and_conservation(n, seed):
    rng = np.random.default_rng(seed)
    net = random_weakly_cyclic_network(n, rng)
    inj = balanced(rng, n)
    a = injection_flows(build_shift_factors(net), inj)
    b = tree_cycle_flows(net, inj)
    assert np.max(np.abs(a - b)) <= 1e-9
    # incidence^T flows reproduces injections at every bus
    assert np.max(np.abs(incidence_matrix(net).T @ a - inj)) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 25), st.integers(0, 10_000))
def test_slack_invariance(n, seed):
    rng = np.random.default_rng(seed)
    net = random_weakly_cyclic_network(n, rng)
    inj = balanced(rng, n)
    slacks = rng.choice(np.array(net.buses), size=2, replace=n < 2)
    f1 = injection_flows(build_shift_factors(net, slack=int(slacks[0])), inj)
    f2 = injection_flows(build_shift_factors(net, slack=int(slacks[1])), inj)
    assert np.max(np.abs(f1 - f2)) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 25), st.integers(0, 10_000))
def test_cycle_law(n, seed):
    rng = np.random.default_rng(seed)
    net = random_weakly_cyclic_network(n, rng)
    flows = injection_flows(build_shift_factors(net), balanced(rng, n))
    b = net.susceptances()
    for cyc in cycle_decomposition(net).cycles:
        idx = np.array(cyc.edges)
        assert abs(np.sum(np.array(cyc.signs) * flows[idx] / b[idx])) <= 1e-9
