import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import t3_market
from sfepoa.dispatch import economic_dispatch, equilibrium_dispatch, modified_costs
from sfepoa.errors import ValidationError
from sfepoa.oracle import (
    BidProfile,
    SfeMultipliers,
    best_response_check,
    bid_violations,
    brute_force_dispatch,
    clearing_price,
    map_multipliers,
    multiplier_map_check,
    payoff_derivative,
    profit,
    profit_closed_form,
    recover_bids,
    sfe_kkt_residual,
    sfe_multipliers,
    supply_from_bids,
)
from sfepoa.synthetic import random_market

SYM = np.full(3, 8 / 3)


@pytest.fixture
def sym():
    return t3_market(costs=(1.0, 1.0, 1.0))


def interior_bids(rng, G, spread=0.3):
    # near-equal bids keep every supply strictly inside [0, D]
    return rng.uniform(1 - spread, 1 + spread, size=G)


def test_clearing_price_examples():
    assert clearing_price([10.0, 10.0, 10.0], 10.0) == pytest.approx(1.5)
    assert clearing_price(SYM, 3.0) == pytest.approx(4 / 3)
    w = np.array([1.0, 2.0, 3.5])
    assert clearing_price(3 * w, 4.0) == pytest.approx(3 * clearing_price(w, 4.0))
    with pytest.raises(ValueError):
        clearing_price([0.0, 0.0, 0.0], 3.0)
    with pytest.raises(ValueError):
        clearing_price([1.0, 1.0], 3.0)
    with pytest.raises(ValueError):
        BidProfile(np.array([1.0, -1.0, 1.0]))


def test_supply_examples():
    assert supply_from_bids([2.0] * 4, 8.0) == pytest.approx([2.0] * 4)
    assert supply_from_bids(SYM, 3.0) == pytest.approx([1.0, 1.0, 1.0])
    s = supply_from_bids([0.0, 0.0, 5.0, 0.0], 2.0)
    # a lone bidder is pushed to a negative supply
    assert s[2] == pytest.approx(-(4 - 2) * 2.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 10.0), min_size=3, max_size=12), st.floats(0.1, 50.0))
def test_supply_sums_to_demand(w, D):
    if sum(w) <= 1e-6:
        return
    assert supply_from_bids(w, D).sum() == pytest.approx(D, rel=1e-12, abs=1e-9)


def test_symmetric_fixed_point(sym):
    for n in (1, 2, 3):
        assert profit(n, SYM, sym) == pytest.approx(1 / 3, abs=1e-14)
        assert payoff_derivative(n, SYM, sym) == pytest.approx(0.0, abs=1e-14)
    assert best_response_check(SYM, sym).passed


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_payoff_forms_agree(seed):
    rng = np.random.default_rng(seed)
    m = random_market(6, rng, n_gen=int(rng.integers(3, 7)), cost_kinds=("linear", "quadratic", "piecewise_linear"))
    w = rng.uniform(0.05, 3.0, size=m.n_generators) * rng.uniform(0.1, 10)
    for n in m.gen_buses:
        a, b = profit(n, w, m), profit_closed_form(n, w, m)
        assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_payoff_derivative_finite_differences(seed):
    rng = np.random.default_rng(seed)
    m = random_market(6, rng, n_gen=int(rng.integers(3, 7)))
    w = interior_bids(rng, m.n_generators) * rng.uniform(0.5, 5)
    for k, n in enumerate(m.gen_buses):
        h = 1e-6 * max(1.0, w[k])
        wp, wm = w.copy(), w.copy()
        wp[k] += h
        wm[k] -= h
        fd = (profit(n, wp, m) - profit(n, wm, m)) / (2 * h)
        d = payoff_derivative(n, w, m)
        assert d == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_derivative_constant_for_vanishing_cost(sym):
    m = t3_market(costs=(1e-300, 1e-300, 1e-300))
    assert payoff_derivative(1, [1.0, 2.0, 3.0], m) == pytest.approx(-1 / 2, abs=1e-12)


def test_derivative_pair_at_kink():
    from sfepoa.costs import two_piece
    from sfepoa.network import make_market
    m = make_market([1, 2, 3], [(1, 2), (2, 3), (1, 3)], {1: 1.0, 2: 1.0, 3: 1.0},
                    {1: (0, 3, two_piece(0.5, 1.0)), 2: (0, 3, two_piece(0.5, 1.0)), 3: (0, 3, two_piece(0.5, 1.0))})
    lo, hi = payoff_derivative(1, [1.0, 1.0, 1.0], m)
    assert lo > hi  # raising the bid lowers output, so the steeper slope applies to the left


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.floats(0.05, 0.95))
def test_strict_concavity_in_own_bid(seed, frac):
    rng = np.random.default_rng(seed)
    m = random_market(6, rng, n_gen=int(rng.integers(3, 7)))
    w = interior_bids(rng, m.n_generators)
    n = m.gen_buses[0]
    a, b = 0.6 * w[0], 1.4 * w[0]
    x = frac * a + (1 - frac) * b
    vals = []
    for v in (a, x, b):
        ww = w.copy()
        ww[0] = v
        vals.append(profit_closed_form(n, ww, m))
    assert vals[1] > frac * vals[0] + (1 - frac) * vals[2]


def test_t3_recovered_bids_pass():
    m = t3_market()
    eq = equilibrium_dispatch(m)
    w = recover_bids(eq, m)
    assert supply_from_bids(w, 3.0) == pytest.approx(eq.supply, abs=1e-12)
    rep = best_response_check(w, m)
    assert rep.passed and rep.max_improvement <= 1e-6
    bad = w.copy()
    bad[0] *= 1.1
    rep2 = best_response_check(bad, m)
    assert not rep2.passed and rep2.max_improvement > 1e-6


def test_infeasible_bids_rejected():
    m = t3_market(0.5)
    w = np.array([1.0, 10.0, 10.0])  # gives bus 1 nearly all of the demand
    assert bid_violations(w, m)
    with pytest.raises(ValidationError, match="infeasible"):
        best_response_check(w, m)


def test_zero_multipliers_at_interior_equilibrium(sym):
    zero = SfeMultipliers.zeros(3, 3)
    cert = map_multipliers(SYM, zero, sym)
    assert cert.price == pytest.approx(4 / 3)
    assert np.all(cert.mu_low == 0) and np.all(cert.lam_up == 0)
    assert multiplier_map_check(SYM, zero, sym).max <= 1e-12
    assert sfe_kkt_residual(SYM, zero, sym) <= 1e-12


def test_t3_multiplier_map():
    m = t3_market()
    eq = equilibrium_dispatch(m)
    w = recover_bids(eq, m)
    sfe = sfe_multipliers(w, eq.certificate, m)
    assert sfe.mu_low[2] > 0
    cert = map_multipliers(w, sfe, m)
    assert cert.mu_low[2] == pytest.approx(0.2, abs=1e-9)
    assert cert.price == pytest.approx(1.8, abs=1e-9)
    assert multiplier_map_check(w, sfe, m).max <= 1e-9
    assert sfe_kkt_residual(w, sfe, m) <= 1e-9


def test_t3_congested_line_multiplier_map():
    m = t3_market(0.5)
    eq = equilibrium_dispatch(m)
    assert np.max(eq.certificate.lam_up + eq.certificate.lam_low) > 0.5
    w = recover_bids(eq, m)
    sfe = sfe_multipliers(w, eq.certificate, m)
    assert multiplier_map_check(w, sfe, m).max <= 1e-9
    assert sfe_kkt_residual(w, sfe, m) <= 1e-9
    assert best_response_check(w, m).passed


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_non_equilibrium_bids_violate_mapping(seed):
    rng = np.random.default_rng(seed)
    m = random_market(6, rng, n_gen=4, limit_margin=(5.0, 10.0))
    eq = equilibrium_dispatch(m)
    w = recover_bids(eq, m) * rng.uniform(0.7, 1.3, size=4)
    if bid_violations(w, m):
        return
    assert multiplier_map_check(w, SfeMultipliers.zeros(4, m.network.n_lines), m).max > 1e-6


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 100_000))
def test_equivalence_on_small_markets(seed):
    rng = np.random.default_rng(seed)
    m = random_market(int(rng.integers(4, 8)), rng, n_gen=int(rng.integers(3, 5)))
    eq = equilibrium_dispatch(m)
    w = recover_bids(eq, m)
    assert best_response_check(w, m).passed
    assert np.max(np.abs(supply_from_bids(w, m.total_demand) - eq.supply)) <= 1e-5
    sfe = sfe_multipliers(w, eq.certificate, m)
    assert multiplier_map_check(w, sfe, m).max <= 1e-8


def test_brute_force_t3():
    m = t3_market()
    bf = brute_force_dispatch(m, grid_step=3 / 2000)
    assert bf.objective == pytest.approx(3.0, abs=0.01)
    eq = equilibrium_dispatch(m)
    bf2 = brute_force_dispatch(m, modified_costs(m))
    assert abs(bf2.objective - eq.objective) <= bf2.resolution
    assert bf2.objective >= eq.objective - 1e-9


def test_brute_force_congested_t3():
    m = t3_market(0.5)
    bf = brute_force_dispatch(m)
    assert bf.objective == pytest.approx(economic_dispatch(m).objective, abs=bf.resolution)
    assert bf.objective == pytest.approx(3.75, abs=0.01)


def test_brute_force_rejects_large_markets():
    with pytest.raises(ValueError):
        brute_force_dispatch(random_market(6, 0, n_gen=4))
