import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import DATA, t3_market
from sfepoa.costs import Linear, Quadratic
from sfepoa.errors import (
    InvalidLineError,
    NetworkError,
    ParseError,
    UnsupportedCostError,
    ValidationError,
)
from sfepoa.io import dump_market, load_network, market_from_dict, market_to_dict, parse_matpower
from sfepoa.network import Generator, Line, Market, Network, make_market, total_demand
from sfepoa.synthetic import random_market
from sfepoa.validation import strict_feasibility_slack, validate_market

CASE3 = """
function mpc = case3
mpc.baseMVA = {base};
mpc.bus = [
  1 3 {pd1} 0 0 0 1 1 0 230 1 1.1 0.9;
  2 2 {pd2} 0 0 0 1 1 0 230 1 1.1 0.9;
  3 2 {pd3} 0 0 0 1 1 0 230 1 1.1 0.9;
];
mpc.gen = [
  1 0 0 0 0 1 100 1 {pmax} 0;
  2 0 0 0 0 1 100 1 {pmax} 0;
  3 0 0 0 0 1 100 1 {pmax} 0;
];
mpc.branch = [
  1 2 0 1.0 0 {rate} 0 0 0 0 1 -360 360;   % first line
  2 3 0 1.0 0 {rate} 0 0 0 0 1 -360 360;
  1 3 0 1.0 0 0 0 0 0 0 1 -360 360;
];
mpc.gencost = [
  2 0 0 3 0.1 5 0;
  2 0 0 2 1.5 0;
  2 0 0 3 0 2 0;
];
"""


def case3(base=1, pd=(1, 1, 1), pmax=3, rate=10):
    return CASE3.format(base=base, pd1=pd[0], pd2=pd[1], pd3=pd[2], pmax=pmax, rate=rate)


# ------------------------------------------------------------------ network

def test_t3_total_demand():
    m = t3_market()
    assert m.total_demand == 3.0
    assert total_demand(m) == 3.0
    assert m.n_generators == 3


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.0, 5.0), min_size=3, max_size=8), st.randoms())
def test_demand_is_order_independent(vals, rnd):
    n = len(vals)
    lines = [(k, k + 1, 1.0, math.inf) for k in range(1, n)]
    gens = {1: (0, 1, Linear(1)), 2: (0, 1, Linear(1)), 3: (0, 1, Linear(1))}
    order = list(range(1, n + 1))
    rnd.shuffle(order)
    a = make_market(range(1, n + 1), lines, dict(zip(range(1, n + 1), vals)), gens)
    b = make_market(order, lines, {b: vals[b - 1] for b in order}, gens)
    assert a.total_demand == pytest.approx(sum(vals), abs=1e-12)
    assert a.total_demand == pytest.approx(b.total_demand, abs=1e-12)


def test_zero_demand_is_zero():
    m = make_market([1, 2, 3], [(1, 2), (2, 3)], {}, {b: (0, 1, Linear(1)) for b in (1, 2, 3)})
    assert m.total_demand == 0.0
    assert not validate_market(m)["positive-demand"].passed


@pytest.mark.parametrize("lines,err", [
    ([Line(1, 2), Line(2, 1)], NetworkError),
    ([Line(1, 2), Line(2, 9)], NetworkError),
    ([Line(1, 2)], NetworkError),
])
def test_network_rejects_bad_graphs(lines, err):
    with pytest.raises(err):
        Network((1, 2, 3), tuple(lines))


@pytest.mark.parametrize("kw", [dict(b=0.0), dict(b=-1.0), dict(f=-1.0), dict(f=math.nan)])
def test_line_rejects_bad_parameters(kw):
    with pytest.raises(InvalidLineError):
        Line(1, 2, **kw)
    with pytest.raises(InvalidLineError):
        Line(1, 1)


def test_generator_bounds_checked():
    with pytest.raises(ValidationError):
        Generator(1.0, 1.0, Linear(1))
    with pytest.raises(ValidationError):
        Generator(-0.1, 1.0, Linear(1))


def test_market_rejects_unknown_buses():
    net = Network((1, 2), (Line(1, 2),))
    with pytest.raises(ValidationError):
        Market(net, {3: 1.0}, {})
    with pytest.raises(ValidationError):
        Market(net, {1: -1.0}, {})


def test_scale_limits_keeps_unlimited_lines():
    m = t3_market().with_limits([1.0, math.inf, 2.0])
    f = m.scale_limits(0.5).network.limits()
    assert f[0] == 0.5 and math.isinf(f[1]) and f[2] == 1.0


# ------------------------------------------------------------------ validation

def test_t3_passes_all_checks():
    rep = validate_market(t3_market())
    assert rep.ok, rep.failures
    # s = (1, 1, 1) leaves slack 1 on every capacity bound and 10 on every line
    assert rep.slack > 0


def test_two_generators_fail_by_name():
    m = make_market([1, 2, 3], [(1, 2), (2, 3)], {1: 1.0}, {1: (0, 3, Linear(1)), 2: (0, 3, Linear(1))})
    rep = validate_market(m)
    assert not rep["generator-count"].passed
    assert "more than two generators" in rep["generator-count"].detail
    with pytest.raises(ValidationError, match="more than two generators"):
        rep.raise_if_failed()


def test_capacity_redundancy_names_generator():
    eps = 0.1
    m = make_market([1, 2, 3], [(1, 2), (2, 3)], {1: 1.0, 2: 1.0, 3: 1.0},
                    {1: (0, 3, Linear(1)), 2: (0, eps, Linear(1)), 3: (0, eps, Linear(1))})
    rep = validate_market(m)
    chk = rep["capacity-redundancy"]
    assert not chk.passed
    assert "generator 1" in chk.detail
    assert [c.name for c in rep.failures] == ["capacity-redundancy"]


def test_strict_feasibility_fails_at_boundary_point():
    # the radial line into load-only bus 4 always carries exactly d_4, so a
    # limit equal to d_4 leaves a feasible set without relative interior
    lines = [(1, 2, 1.0, 10.0), (2, 3, 1.0, 10.0), (1, 3, 1.0, 10.0), (3, 4, 1.0, 1.0)]
    gens = {b: (0, 3, Linear(1)) for b in (1, 2, 3)}
    m = make_market([1, 2, 3, 4], lines, {1: 1.0, 4: 1.0}, gens)
    rep = validate_market(m)
    assert not rep["strict-feasibility"].passed
    assert strict_feasibility_slack(m) <= 1e-9
    assert validate_market(m.with_limits([10.0, 10.0, 10.0, 1.01])).ok


def test_strict_feasibility_slack_scales_with_limits():
    lo = strict_feasibility_slack(t3_market(0.5))
    hi = strict_feasibility_slack(t3_market(10.0))
    assert 0 < lo <= hi


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_random_markets_satisfy_assumptions(seed):
    m = random_market(int(np.random.default_rng(seed).integers(4, 15)), seed)
    assert validate_market(m).ok


# ------------------------------------------------------------------ json io

def test_json_round_trip_is_idempotent():
    m = t3_market()
    text = dump_market(m)
    again = dump_market(load_network(text))
    assert again == text
    assert json.loads(text)["lines"][0] == {"from": 1, "to": 2, "b": 1.0, "f": 10.0}


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_json_round_trip_random(seed):
    m = random_market(8, seed, cost_kinds=("linear", "quadratic", "piecewise_linear"))
    doc = market_to_dict(m)
    assert market_to_dict(market_from_dict(json.loads(json.dumps(doc)))) == doc


def test_unlimited_lines_serialise_as_null():
    m = t3_market().with_limits([math.inf, 1.0, 1.0])
    doc = market_to_dict(m)
    assert doc["lines"][0]["f"] is None
    assert math.isinf(market_from_dict(doc).network.lines[0].f)


def test_json_files_in_test_data():
    m = load_network((DATA / "t3.json").read_text())
    assert m.total_demand == 3.0
    with pytest.raises(ValidationError, match="more than two generators"):
        load_network((DATA / "two_gen.json").read_text())
    assert load_network((DATA / "two_gen.json").read_text(), validate=False).n_generators == 2


@pytest.mark.parametrize("doc,msg", [
    ([], "JSON object"),
    ({"lines": [], "generators": {}}, "buses"),
    ({"buses": [1, 2], "lines": [{"from": 1, "to": 2}], "generators": {}}, "'b'"),
    ({"buses": [1, 2], "lines": [{"from": 1, "to": 2, "b": "x"}], "generators": {}}, "number"),
])
def test_json_schema_errors(doc, msg):
    with pytest.raises(ParseError, match=msg):
        market_from_dict(doc)


def test_invalid_json_text():
    with pytest.raises(ParseError):
        load_network("{not json")


# ------------------------------------------------------------------ matpower

def test_matpower_per_unit_identity_at_base_one():
    net, m = parse_matpower(case3())
    assert np.allclose(net.susceptances(), 1.0)
    assert m.generators[1].cost == Quadratic(0.1, 5.0)
    assert m.generators[2].cost == Linear(1.5)
    assert m.generators[3].cost == Linear(2.0)
    assert math.isinf(net.lines[2].f)
    assert net.lines[0].f == 10.0
    assert m.total_demand == 3.0


def test_matpower_base_scaling_preserves_costs():
    _, m1 = parse_matpower(case3())
    _, m100 = parse_matpower(case3(base=100, pd=(100, 100, 100), pmax=300, rate=1000))
    assert m100.total_demand == pytest.approx(3.0)
    assert m100.network.lines[0].f == pytest.approx(10.0)
    s_mw = 150.0
    c1 = m1.generators[1].cost.value(s_mw)
    c100 = m100.generators[1].cost.value(s_mw / 100)
    assert c100 == pytest.approx(c1, rel=1e-12)


def test_matpower_case_file(data_dir):
    net, m = parse_matpower((data_dir / "case4.m").read_text())
    assert m.network.n_lines == 4
    assert m.generators[1].cost == Quadratic(100.0, 1000.0)
    assert validate_market(m).ok


def test_matpower_errors():
    with pytest.raises(ParseError, match="baseMVA"):
        parse_matpower(case3().replace("mpc.baseMVA", "mpc.other"))
    with pytest.raises(InvalidLineError):
        parse_matpower(case3().replace("1 2 0 1.0 0", "1 2 0 -1.0 0"))
    with pytest.raises(UnsupportedCostError):
        parse_matpower(case3().replace("2 0 0 3 0.1 5 0;", "1 0 0 2 0 0 1 1;"))
    with pytest.raises(UnsupportedCostError):
        parse_matpower(case3().replace("2 0 0 3 0.1 5 0;", "2 0 0 4 1 0.1 5 0;"))
    with pytest.raises(ParseError) as info:
        parse_matpower(case3().replace("  2 2 1 0 0 0 1 1 0 230 1 1.1 0.9;", "  2 2;"))
    assert info.value.line is not None


def test_matpower_without_gencost_needs_opt_in():
    text = case3().split("mpc.gencost")[0]
    with pytest.raises(UnsupportedCostError):
        parse_matpower(text)
    _, m = parse_matpower(text, default_quadratic=(0.1, 2.0))
    assert m.generators[1].cost == Quadratic(0.1, 2.0)
