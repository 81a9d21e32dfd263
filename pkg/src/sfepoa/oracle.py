"""Independent checks in bid space and by exhaustive search.

Each supplier ``n`` bids ``w_n >= 0`` for the supply function
``S_n(p) = D - w_n / p``.  Clearing the market gives::

    p(w)   = sum(w) / ((N_g - 1) D)
    s_n(w) = D - w_n (N_g - 1) D / sum(w)

This module evaluates payoffs and their derivatives, checks that a bid
profile is a generalised Nash equilibrium by solving every supplier's
one-dimensional best-response problem, maps bid-space multipliers onto the
modified-cost program and brute-forces small dispatch problems on a grid.
None of it relies on the interior-point solver, so it serves as a second
route to every quantity the dispatch module computes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dispatch import DispatchResult, KktCertificate, KktReport, kkt_residual_pol, modified_costs, polytope
from .errors import InfeasibleError, ValidationError
from .network import BusId, Market
from .powerflow import ShiftFactors, shift_factors

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
FEAS_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class BidProfile:
    """Nonnegative bids, one per generator in ``gen_buses`` order."""

    w: np.ndarray
    gen_buses: tuple = ()

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).ravel()
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise ValueError("bids must be finite and nonnegative")
        object.__setattr__(self, "w", w)

    @property
    def total(self) -> float:
        return float(self.w.sum())

    @property
    def n_positive(self) -> int:
        return int(np.count_nonzero(self.w > 0))


def _bids(w) -> np.ndarray:
    if isinstance(w, BidProfile):
        return w.w
    return BidProfile(w).w


def _total(w: np.ndarray) -> float:
    W = float(w.sum())
    if not W > 0:
        raise ValueError("the bids must not all be zero")
    return W


def clearing_price(w, D: float, n_gen: int | None = None) -> float:
    """Market-clearing price ``sum(w) / ((N_g - 1) D)``."""
    w = _bids(w)
    G = len(w) if n_gen is None else int(n_gen)
    if G <= 2:
        raise ValueError("clearing requires more than two generators")
    return _total(w) / ((G - 1) * D)


def supply_from_bids(w, D: float, n_gen: int | None = None) -> np.ndarray:
    """Supplies ``D - w_n (N_g - 1) D / sum(w)``; they always sum to ``D``."""
    w = _bids(w)
    G = len(w) if n_gen is None else int(n_gen)
    return D - w * ((G - 1) * D / _total(w))


def _gen_index(m: Market, n: BusId) -> int:
    try:
        return m.gen_buses.index(n)
    except ValueError:
        raise KeyError(f"bus {n} has no generator") from None


def profit(n: BusId, w, m: Market) -> float:
    """Revenue minus cost of the generator at bus ``n``."""
    w = _bids(w)
    k = _gen_index(m, n)
    D, G = m.total_demand, m.n_generators
    p = clearing_price(w, D, G)
    s = supply_from_bids(w, D, G)[k]
    return float(p * s - m.generators[n].cost.value(s))


def profit_closed_form(n: BusId, w, m: Market) -> float:
    """The same payoff written as ``sum(w)/(N_g - 1) - w_n - c_n(s_n)``."""
    w = _bids(w)
    k = _gen_index(m, n)
    D, G = m.total_demand, m.n_generators
    s = supply_from_bids(w, D, G)[k]
    return float(_total(w) / (G - 1) - w[k] - m.generators[n].cost.value(s))


def payoff_derivative(n: BusId, w, m: Market):
    """Derivative of the payoff of generator ``n`` with respect to its own bid.

    Returns a float where the cost is differentiable at ``s_n``.  At a kink
    of the cost a pair ``(left, right)`` of one-sided derivatives in ``w_n``
    is returned; raising the bid lowers the supply, so the right derivative
    uses the cost's left slope.
    """
    w = _bids(w)
    k = _gen_index(m, n)
    D, G = m.total_demand, m.n_generators
    W = _total(w)
    s = supply_from_bids(w, D, G)[k]
    c = m.generators[n].cost
    factor = (G - 1) * D * (W - w[k]) / (W * W)
    const = -(G - 2) / (G - 1)
    if c.is_kink(s):
        return const + c.right_derivative(s) * factor, const + c.left_derivative(s) * factor
    return const + c.derivative(s) * factor


# ---------------------------------------------------------------- best response

@dataclass(frozen=True, eq=False)
class BestResponseProblem:
    """Supplier ``n``'s payoff maximisation with the others' bids fixed.

    ``b`` is the per-line constant vector with which every constraint is
    linear in the bids: line flows stay within limits iff
    ``sum_m w_m (b_m - f) <= 0`` and ``sum_m w_m (b_m + f) >= 0``.
    ``[lo, hi]`` is the feasible interval of ``w_n``.
    """

    bus: BusId
    index: int
    b: np.ndarray
    others: float
    lo: float
    hi: float


@dataclass(frozen=True)
class BestResponseRow:
    bus: BusId
    bid: float
    lo: float
    hi: float
    best_bid: float
    improvement: float


@dataclass(frozen=True)
class BestResponseReport:
    rows: tuple
    max_improvement: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_improvement <= self.tol


def line_constants(m: Market, sf: ShiftFactors | None = None) -> np.ndarray:
    """Columns ``b_m = D A_g 1 + A_l d - (N_g - 1) D A_g[:, m]``, one per generator."""
    pol = polytope(m, sf)
    D, G = pol.D, len(pol.smin)
    c = D * pol.A_g.sum(axis=1) + pol.offset
    return c[:, None] - (G - 1) * D * pol.A_g


def bid_violations(w, m: Market, sf: ShiftFactors | None = None, tol: float = FEAS_TOL) -> list:
    """Constraints violated by the supplies and flows that ``w`` induces."""
    w = _bids(w)
    pol = polytope(m, sf)
    if w.size != len(pol.smin):
        raise ValueError("one bid per generator expected")
    if not w.sum() > 0:
        return ["all bids are zero"]
    s = supply_from_bids(w, pol.D)
    out = []
    for k, n in enumerate(pol.gen_buses):
        scale = tol * max(1.0, pol.smax[k])
        if s[k] < pol.smin[k] - scale:
            out.append(f"generator {n}: supply {s[k]:.9g} below minimum {pol.smin[k]:.9g}")
        if s[k] > pol.smax[k] + scale:
            out.append(f"generator {n}: supply {s[k]:.9g} above capacity {pol.smax[k]:.9g}")
    fl = pol.flows(s)
    for l in np.flatnonzero(np.isfinite(pol.f)):
        if abs(fl[l]) > pol.f[l] + tol * max(1.0, pol.f[l]):
            ln = m.network.lines[l]
            out.append(f"line {ln.from_bus}-{ln.to_bus}: flow {fl[l]:.9g} exceeds limit {pol.f[l]:.9g}")
    return out


def best_response_problem(n: BusId, w, m: Market, sf: ShiftFactors | None = None,
                          bmat: np.ndarray | None = None) -> BestResponseProblem:
    """Feasible bid interval of generator ``n`` from the linear constraints."""
    w = _bids(w)
    k = _gen_index(m, n)
    D, G = m.total_demand, m.n_generators
    K = (G - 2) * D
    R = float(w.sum() - w[k])
    bmat = line_constants(m, sf) if bmat is None else bmat
    g = m.generators[n]
    # rows a * w_n + r <= 0
    rows = [(g.smin + K, (g.smin - D) * R), (-(g.smax + K), -(g.smax - D) * R), (-1.0, 0.0)]
    f = m.network.limits()
    rest = bmat @ w - bmat[:, k] * w[k]
    for l in np.flatnonzero(np.isfinite(f)):
        rows.append((bmat[l, k] - f[l], rest[l] - f[l] * R))
        rows.append((-(bmat[l, k] + f[l]), -(rest[l] + f[l] * R)))
    lo, hi = 0.0, math.inf
    scale = max(1.0, abs(K), float(np.max(np.abs(bmat), initial=0.0)))
    for a, r in rows:
        if abs(a) <= 1e-14 * scale:
            continue
        x = -r / a
        if a > 0:
            hi = min(hi, x)
        else:
            lo = max(lo, x)
    # keep the current bid inside despite round-off
    lo, hi = min(lo, w[k]), max(hi, w[k])
    return BestResponseProblem(n, k, bmat[:, k].copy(), R, float(lo), float(hi))


def _golden_max(fun, lo: float, hi: float, max_iter: int = 200, xtol: float = 1e-13):
    a, b = lo, hi
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = fun(x1), fun(x2)
    for _ in range(max_iter):
        if b - a <= xtol * max(1.0, abs(a), abs(b)):
            break
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = fun(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = fun(x1)
    cands = [(f1, x1), (f2, x2), (fun(lo), lo), (fun(hi), hi)]
    fbest, xbest = max(cands)
    return xbest, fbest


def best_response_check(w, m: Market, sf: ShiftFactors | None = None, tol: float = 1e-6,
                        max_iter: int = 200) -> BestResponseReport:
    """Test whether ``w`` is an equilibrium by maximising each payoff in turn.

    The payoff of every supplier is strictly concave in its own bid on the
    feasible interval, so golden-section search finds the best response.
    The check passes when no supplier can gain more than ``tol``.

    Raises
    ------
    ValidationError
        If ``w`` itself violates a constraint; ``failures`` lists them.
    """
    w = _bids(w).copy()
    bad = bid_violations(w, m, sf)
    if bad:
        raise ValidationError("bid profile is infeasible: " + "; ".join(bad), bad)
    bmat = line_constants(m, sf)
    rows = []
    worst = 0.0
    for n in m.gen_buses:
        prob = best_response_problem(n, w, m, sf, bmat)
        k = prob.index
        u0 = profit_closed_form(n, w, m)

        def u(x, k=k, n=n):
            trial = w.copy()
            trial[k] = x
            return profit_closed_form(n, trial, m)

        if prob.hi - prob.lo <= 0:
            xb, ub = w[k], u0
        else:
            xb, ub = _golden_max(u, prob.lo, min(prob.hi, _finite_cap(prob, w)), max_iter)
        gain = max(0.0, ub - u0)
        worst = max(worst, gain)
        rows.append(BestResponseRow(n, float(w[k]), prob.lo, prob.hi, float(xb), float(gain)))
    return BestResponseReport(tuple(rows), float(worst), tol)


def _finite_cap(prob: BestResponseProblem, w) -> float:
    # the own-minimum constraint always gives a finite upper end; this is a guard only
    return prob.hi if math.isfinite(prob.hi) else 10.0 * max(1.0, float(np.sum(w)))


# ---------------------------------------------------------- multiplier mapping

@dataclass(frozen=True)
class SfeMultipliers:
    """Multipliers of the bid-space constraints (all nonnegative)."""

    mu_low: np.ndarray
    mu_up: np.ndarray
    lam_low: np.ndarray
    lam_up: np.ndarray

    @classmethod
    def zeros(cls, n_gen: int, n_lines: int) -> "SfeMultipliers":
        return cls(np.zeros(n_gen), np.zeros(n_gen), np.zeros(n_lines), np.zeros(n_lines))


def _centre(pol) -> np.ndarray:
    return pol.D * pol.A_g.sum(axis=1) + pol.offset


def _finite(x, f):
    return np.where(np.isfinite(f), x, 0.0)


def map_multipliers(w, sfe: SfeMultipliers, m: Market, sf: ShiftFactors | None = None) -> KktCertificate:
    """Modified-cost program multipliers built from bid-space ones.

    With ``W = sum(w)``, ``K = (N_g - 2) D`` and ``c = D A_g 1 + A_l d``::

        lam_mcm = (N_g - 1)/(N_g - 2) W lam_sfe
        mu_mcm  = (1 + s_bound/K) W mu_sfe
        p_mcm   = p(w) - (W/K) [lam_low_sfe . (c + f) - lam_up_sfe . (c - f)]
    """
    w = _bids(w)
    pol = polytope(m, sf)
    D, G = pol.D, len(pol.smin)
    K = (G - 2) * D
    W = _total(w)
    c = _centre(pol)
    f = pol.f
    ll = _finite(np.asarray(sfe.lam_low, dtype=float), f)
    lu = _finite(np.asarray(sfe.lam_up, dtype=float), f)
    adj = float(np.sum(_finite(ll * (c + f), f) - _finite(lu * (c - f), f)))
    price = clearing_price(w, D, G) - W / K * adj
    return KktCertificate(
        price=float(price),
        mu_low=(1.0 + pol.smin / K) * W * np.asarray(sfe.mu_low, dtype=float),
        mu_up=(1.0 + pol.smax / K) * W * np.asarray(sfe.mu_up, dtype=float),
        lam_low=(G - 1) / (G - 2) * W * ll,
        lam_up=(G - 1) / (G - 2) * W * lu,
    )


def sfe_multipliers(w, cert: KktCertificate, m: Market) -> SfeMultipliers:
    """Inverse of ``map_multipliers`` for the box and line multipliers."""
    w = _bids(w)
    D, G = m.total_demand, m.n_generators
    K = (G - 2) * D
    W = _total(w)
    return SfeMultipliers(
        mu_low=np.asarray(cert.mu_low) / ((1.0 + m.smin() / K) * W),
        mu_up=np.asarray(cert.mu_up) / ((1.0 + m.smax() / K) * W),
        lam_low=np.asarray(cert.lam_low) * (G - 2) / ((G - 1) * W),
        lam_up=np.asarray(cert.lam_up) * (G - 2) / ((G - 1) * W),
    )


def multiplier_map_check(w, sfe: SfeMultipliers, m: Market, sf: ShiftFactors | None = None) -> KktReport:
    """Modified-cost KKT residual of the mapped multipliers at ``s(w)``."""
    sf = sf or shift_factors(m)
    pol = polytope(m, sf)
    cert = map_multipliers(w, sfe, m, sf)
    s = supply_from_bids(_bids(w), pol.D)
    return kkt_residual_pol(pol, modified_costs(m), s, cert, mode="certificate")


def sfe_kkt_residual(w, sfe: SfeMultipliers, m: Market, sf: ShiftFactors | None = None) -> float:
    """Largest violation of the bid-space KKT system of all suppliers.

    Stationarity for supplier ``n`` reads::

        du_n/dw_n - (smin_n + K) mu_low_n + (smax_n + K) mu_up_n
                  + lam_low . (b_n + f) - lam_up . (b_n - f) = 0

    At a cost kink any value between the one-sided derivatives is accepted.
    Complementarity is measured on the constraints divided by ``sum(w)``.
    """
    w = _bids(w)
    sf = sf or shift_factors(m)
    pol = polytope(m, sf)
    D, G = pol.D, len(pol.smin)
    K = (G - 2) * D
    W = _total(w)
    bmat = line_constants(m, sf)
    f = pol.f
    fin = np.isfinite(f)
    ll = _finite(np.asarray(sfe.lam_low, dtype=float), f)
    lu = _finite(np.asarray(sfe.lam_up, dtype=float), f)
    fz = np.where(fin, f, 0.0)
    worst = 0.0
    for k, n in enumerate(pol.gen_buses):
        d = payoff_derivative(n, w, m)
        lo, hi = (min(d), max(d)) if isinstance(d, tuple) else (d, d)
        extra = (-(pol.smin[k] + K) * sfe.mu_low[k] + (pol.smax[k] + K) * sfe.mu_up[k]
                 + ll @ (bmat[:, k] + fz) - lu @ (bmat[:, k] - fz))
        worst = max(worst, lo + extra, -(hi + extra))
    R = W - w
    g_low = ((pol.smin + K) * w + (pol.smin - D) * R) / W
    g_up = ((pol.smax + K) * w + (pol.smax - D) * R) / W
    up = (bmat - fz[:, None]) @ w / W
    low = (bmat + fz[:, None]) @ w / W
    parts = [
        np.max(sfe.mu_low * np.abs(g_low), initial=0.0), np.max(sfe.mu_up * np.abs(g_up), initial=0.0),
        np.max(np.maximum(g_low, 0.0), initial=0.0), np.max(np.maximum(-g_up, 0.0), initial=0.0),
        np.max(_finite(ll * np.abs(low), f), initial=0.0), np.max(_finite(lu * np.abs(up), f), initial=0.0),
        np.max(_finite(np.maximum(-low, 0.0), f), initial=0.0), np.max(_finite(np.maximum(up, 0.0), f), initial=0.0),
        -min(0.0, np.min(sfe.mu_low, initial=0.0), np.min(sfe.mu_up, initial=0.0),
             np.min(ll, initial=0.0), np.min(lu, initial=0.0)),
    ]
    return float(max(worst, *parts))


def recover_bids(eq: DispatchResult, m: Market, sf: ShiftFactors | None = None) -> np.ndarray:
    """A bid profile whose clearing reproduces the equilibrium dispatch ``eq``.

    Bids ``w_n = q (D - s_n)`` clear at price ``q`` and give supplies ``s``
    for every ``q > 0``; the choice
    ``q = p + [lam_low . (c + f) - lam_up . (c - f)] / ((N_g - 1) D)``
    inverts the multiplier map, so the profile satisfies every supplier's
    first-order conditions.
    """
    sf = sf or shift_factors(m)
    pol = polytope(m, sf)
    D, G = pol.D, len(pol.smin)
    c = _centre(pol)
    f = pol.f
    cert = eq.certificate
    adj = float(np.sum(_finite(cert.lam_low * (c + f), f) - _finite(cert.lam_up * (c - f), f)))
    q = cert.price + adj / ((G - 1) * D)
    if not q > 0:
        raise ValueError(f"recovered clearing price must be positive, got {q}")
    return q * (D - np.asarray(eq.supply, dtype=float))


# ------------------------------------------------------------------ brute force

@dataclass(frozen=True, eq=False)
class BruteForceResult:
    objective: float
    supply: np.ndarray
    grid_step: float
    n_feasible: int
    #: objective accuracy implied by the grid (Lipschitz constant times two steps)
    resolution: float


def brute_force_dispatch(m: Market, costs: Sequence | None = None, grid_step: float | None = None,
                         sf: ShiftFactors | None = None, tol: float = FEAS_TOL,
                         chunk: int = 256) -> BruteForceResult:
    """Exhaustive grid search for markets with at most three generators.

    The last generator's output is eliminated through the balance equation,
    so the search runs over a grid of at most two dimensions with spacing
    ``grid_step`` (default ``D / 2000``).

    Raises
    ------
    InfeasibleError
        If no grid point satisfies every constraint.
    """
    pol = polytope(m, sf)
    costs = list(m.costs() if costs is None else costs)
    G = len(costs)
    if G > 3 or G < 1:
        raise ValueError("brute force handles one to three generators")
    D = pol.D
    h = D / 2000.0 if grid_step is None else float(grid_step)
    if not h > 0:
        raise ValueError("grid step must be positive")
    axes = []
    for k in range(G - 1):
        n_pts = int(math.floor((pol.smax[k] - pol.smin[k]) / h + 1e-9)) + 1
        pts = pol.smin[k] + h * np.arange(n_pts)
        if pts[-1] < pol.smax[k] - 1e-12:
            pts = np.r_[pts, pol.smax[k]]
        axes.append(pts)
    fin = np.isfinite(pol.f)
    A = pol.A_g[fin]
    off = pol.offset[fin]
    f = pol.f[fin]
    ftol = tol * np.maximum(1.0, f)
    btol = tol * np.maximum(1.0, pol.smax)
    best_val, best_s, count = math.inf, None, 0

    def scan(*cols):
        nonlocal best_val, best_s, count
        S = list(cols)
        S.append(D - sum(S) if S else np.full(1, D))
        ok = (S[-1] >= pol.smin[G - 1] - btol[G - 1]) & (S[-1] <= pol.smax[G - 1] + btol[G - 1])
        if fin.any():
            fl = off[:, None] + sum(A[:, [k]] * S[k][None, :] for k in range(G))
            ok &= np.all(np.abs(fl) <= (f + ftol)[:, None], axis=0)
        if not ok.any():
            return
        count += int(ok.sum())
        val = sum(np.asarray(costs[k].value(S[k][ok]), dtype=float) for k in range(G))
        j = int(np.argmin(val))
        if val[j] < best_val:
            best_val = float(val[j])
            best_s = np.array([S[k][ok][j] for k in range(G)])

    if G == 1:
        scan()  # the balance equation fixes the only output
    elif G == 2:
        scan(axes[0])
    else:
        x0, x1 = axes
        for i in range(0, len(x0), chunk):
            a = x0[i:i + chunk]
            scan(np.repeat(a, len(x1)), np.tile(x1, len(a)))
    if best_s is None:
        raise InfeasibleError("no feasible grid point: the market is infeasible or the grid is too coarse")
    lip = max(c.right_derivative(float(hi)) for c, hi in zip(costs, pol.smax))
    return BruteForceResult(best_val, best_s, h, count, float(2.0 * lip * h))
