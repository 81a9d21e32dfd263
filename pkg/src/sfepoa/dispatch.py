"""Economic dispatch and the equilibrium (modified-cost) dispatch.

Both problems minimise a separable convex cost over the same polytope::

    sum_n s_n = D,   smin <= s <= smax,   -f <= A_g s + A_l d <= f

Each generator is split into segments between the kinks of its cost so the
objective is smooth on every variable; the segments are then handed to the
interior-point core.  The reported certificate uses the sign convention::

    c'(s_n) - p - mu_low_n + mu_up_n + (lam_up - lam_low) . A_g[:, n] = 0
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from ._ipm import interior_point
from .costs import CostFunction, modified_cost
from .errors import InfeasibleError, SolverError, ValidationError
from .network import Market
from .powerflow import ShiftFactors, shift_factors

BOUND_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Polytope:
    """Feasible supply profiles of a market for fixed shift factors."""

    D: float
    smin: np.ndarray
    smax: np.ndarray
    A_g: np.ndarray
    offset: np.ndarray
    f: np.ndarray
    gen_buses: tuple

    @property
    def limited(self) -> np.ndarray:
        return np.flatnonzero(np.isfinite(self.f) & (self.f > 0))

    @property
    def zero(self) -> np.ndarray:
        return np.flatnonzero(self.f == 0)

    def flows(self, s) -> np.ndarray:
        return self.A_g @ np.asarray(s, dtype=float) + self.offset

    def violation(self, s) -> float:
        """Largest violation of any constraint at ``s`` (0 when feasible)."""
        s = np.asarray(s, dtype=float)
        fl = self.flows(s)
        fin = np.isfinite(self.f)
        parts = [
            abs(s.sum() - self.D),
            np.max(np.maximum(self.smin - s, 0.0), initial=0.0),
            np.max(np.maximum(s - self.smax, 0.0), initial=0.0),
            np.max(np.maximum(np.abs(fl[fin]) - self.f[fin], 0.0), initial=0.0),
        ]
        return float(max(parts))


def polytope(m: Market, sf: ShiftFactors | None = None) -> Polytope:
    sf = sf or shift_factors(m)
    if tuple(sf.gen_buses) != m.gen_buses:
        raise ValueError("shift factors were built for a different generator set")
    return Polytope(m.total_demand, m.smin(), m.smax(), sf.A_g, sf.A_l @ m.load_vector(),
                    m.network.limits(), m.gen_buses)


@dataclass(frozen=True)
class KktCertificate:
    price: float
    mu_low: np.ndarray
    mu_up: np.ndarray
    lam_low: np.ndarray
    lam_up: np.ndarray


@dataclass(frozen=True)
class KktReport:
    stationarity: float
    balance: float
    primal: float
    box_complementarity: float
    line_complementarity: float
    dual_sign: float
    per_generator: np.ndarray = field(repr=False, default=None)

    @property
    def max(self) -> float:
        return float(max(self.stationarity, self.balance, self.primal, self.box_complementarity,
                         self.line_complementarity, self.dual_sign))


@dataclass(frozen=True, eq=False)
class DispatchResult:
    supply: np.ndarray
    objective: float
    price: float
    certificate: KktCertificate
    report: KktReport
    iterations: int
    costs: tuple
    polytope: Polytope

    @property
    def gen_buses(self) -> tuple:
        return self.polytope.gen_buses

    @property
    def supply_map(self) -> dict:
        return dict(zip(self.gen_buses, map(float, self.supply)))

    @property
    def flows(self) -> np.ndarray:
        return self.polytope.flows(self.supply)

    @property
    def residual(self) -> float:
        return self.report.max


def modified_costs(m: Market) -> list:
    """Modified costs of every generator with ``K = (N_g - 2) D``."""
    G, D = m.n_generators, m.total_demand
    if G <= 2:
        raise ValidationError("the equilibrium dispatch requires more than two generators")
    if D <= 0:
        raise ValidationError("the equilibrium dispatch requires positive demand")
    K = (G - 2) * D
    return [modified_cost(c, K) for c in m.costs()]


def _derivative_interval(c: CostFunction, s: float, atol: float):
    for bp in c.breakpoints:
        if abs(s - bp) <= atol:
            return c.left_derivative(bp), c.right_derivative(bp)
    return c.left_derivative(s), c.right_derivative(s)


def kkt_residual_pol(pol: Polytope, costs: Sequence[CostFunction], s, cert: KktCertificate,
                     mode: str = "implied", atol: float = BOUND_TOL) -> KktReport:
    """KKT residuals of ``(s, cert)`` for minimising ``sum costs`` over ``pol``.

    In ``implied`` mode the box multipliers are taken as the best ones
    consistent with the price and line multipliers, which turns stationarity
    into a projected (subgradient-interval) test.  In ``certificate`` mode the
    supplied box multipliers are used verbatim.
    """
    s = np.asarray(s, dtype=float)
    fl = pol.flows(s)
    fin = np.isfinite(pol.f)
    lam_low = np.where(fin, cert.lam_low, 0.0)
    lam_up = np.where(fin, cert.lam_up, 0.0)
    m0 = cert.price + pol.A_g.T @ (lam_low - lam_up)
    stat = np.zeros(len(s))
    boxc = 0.0
    for n, c in enumerate(costs):
        lo, hi = _derivative_interval(c, s[n], atol * max(1.0, abs(s[n])))
        tol_b = atol * max(1.0, abs(pol.smax[n]))
        at_low = s[n] - pol.smin[n] <= tol_b
        at_up = pol.smax[n] - s[n] <= tol_b
        if mode == "implied":
            if at_low:
                stat[n] = max(0.0, m0[n] - hi)
            elif at_up:
                stat[n] = max(0.0, lo - m0[n])
            else:
                stat[n] = max(0.0, lo - m0[n], m0[n] - hi)
        elif mode == "certificate":
            mm = m0[n] + cert.mu_low[n] - cert.mu_up[n]
            stat[n] = max(0.0, lo - mm, mm - hi)
            boxc = max(boxc, abs(cert.mu_low[n] * (s[n] - pol.smin[n])),
                       abs(cert.mu_up[n] * (pol.smax[n] - s[n])))
        else:
            raise ValueError(f"unknown mode {mode!r}")
    slack_up = pol.f - fl
    slack_low = pol.f + fl
    linec = 0.0
    if fin.any():
        linec = float(max(np.max(np.abs(lam_up[fin] * slack_up[fin])),
                          np.max(np.abs(lam_low[fin] * slack_low[fin]))))
    signs = [cert.price * 0.0, np.min(lam_low, initial=0.0), np.min(lam_up, initial=0.0)]
    if mode == "certificate":
        signs += [np.min(cert.mu_low, initial=0.0), np.min(cert.mu_up, initial=0.0)]
    dual_sign = float(-min(signs))
    return KktReport(
        stationarity=float(np.max(stat, initial=0.0)),
        balance=float(abs(s.sum() - pol.D)),
        primal=pol.violation(s),
        box_complementarity=float(boxc),
        line_complementarity=linec,
        dual_sign=dual_sign,
        per_generator=stat,
    )


def kkt_residual(m: Market, costs: Sequence[CostFunction], result: DispatchResult,
                 mode: str = "implied", supply=None) -> KktReport:
    """Residual report for a dispatch result, optionally at a different ``supply``."""
    pol = result.polytope
    s = result.supply if supply is None else np.asarray(supply, dtype=float)
    return kkt_residual_pol(pol, costs, s, result.certificate, mode)


def implied_box_multipliers(pol: Polytope, costs, s, price, lam_low, lam_up, atol=BOUND_TOL):
    """Box multipliers that best satisfy stationarity given price and line duals."""
    m0 = price + pol.A_g.T @ (lam_low - lam_up)
    mu_low = np.zeros(len(s))
    mu_up = np.zeros(len(s))
    for n, c in enumerate(costs):
        lo, hi = _derivative_interval(c, s[n], atol * max(1.0, abs(s[n])))
        tol_b = atol * max(1.0, abs(pol.smax[n]))
        if s[n] - pol.smin[n] <= tol_b:
            mu_low[n] = max(0.0, lo - m0[n])
        elif pol.smax[n] - s[n] <= tol_b:
            mu_up[n] = max(0.0, m0[n] - hi)
    return mu_low, mu_up


def _segments(costs, smin, smax):
    segs = []  # (generator, lo, hi, piece)
    for n, c in enumerate(costs):
        pts = [smin[n]]
        for bp in c.breakpoints:
            if smin[n] + 1e-12 < bp < smax[n] - 1e-12:
                pts.append(bp)
        pts.append(smax[n])
        for lo, hi in zip(pts, pts[1:]):
            segs.append((n, lo, hi, c.piece_index(0.5 * (lo + hi))))
    return segs


def _certify(pol, costs, s, price, lam_low, lam_up):
    mu_low, mu_up = implied_box_multipliers(pol, costs, s, price, lam_low, lam_up)
    cert = KktCertificate(float(price), mu_low, mu_up, lam_low, lam_up)
    return s, cert, kkt_residual_pol(pol, costs, s, cert)


def _polish(costs, pol: Polytope, s0, price0, lam_low0, lam_up0, thr: float, max_iter: int = 30):
    """Active-set refinement of an interior-point solution.

    Generators within ``thr`` (relative) of a bound or kink are pinned there,
    lines within ``thr`` of their limit are held at it, and the remaining
    stationarity, balance and binding-flow equations are solved by Newton's
    method.  This recovers the exact vertex on degenerate problems where the
    interior iterates approach it only like ``sqrt(mu)``.  Returns ``None``
    when the reduced system produces a non-finite point.
    """
    G = len(s0)
    scale = max(1.0, float(np.max(np.abs(pol.smax))))
    s = np.array(s0, dtype=float)
    free, piece = [], {}
    for n, c in enumerate(costs):
        pts = [pol.smin[n], pol.smax[n]] + [b for b in c.breakpoints if pol.smin[n] < b < pol.smax[n]]
        q = min(pts, key=lambda x: abs(x - s0[n]))
        if abs(q - s0[n]) <= thr * scale:
            s[n] = q
        else:
            free.append(n)
            piece[n] = c.piece_index(s0[n])
    fl = pol.flows(s0)
    fin = np.isfinite(pol.f)
    bind = [l for l in np.flatnonzero(fin)
            if pol.f[l] - abs(fl[l]) <= thr * max(1.0, pol.f[l])]
    sigma = np.array([1.0 if fl[l] >= 0 else -1.0 for l in bind])
    F = np.array(free, dtype=int)
    B = np.array(bind, dtype=int)
    nf, nb = len(F), len(B)
    A_B = pol.A_g[B] if nb else np.zeros((0, G))
    nu = (lam_low0 - lam_up0)[B] if nb else np.zeros(0)
    p = float(price0)
    for _ in range(max_iter):
        d1 = np.empty(nf)
        d2 = np.empty(nf)
        for i, n in enumerate(F):
            d1[i], d2[i] = costs[n].piece_derivatives(piece[n], s[n])
        flow_res = A_B @ s + pol.offset[B] - sigma * pol.f[B] if nb else np.zeros(0)
        r = np.r_[d1 - p - A_B[:, F].T @ nu, s.sum() - pol.D, flow_res]
        J = np.zeros((nf + 1 + nb, nf + 1 + nb))
        J[:nf, :nf] = np.diag(d2)
        J[:nf, nf] = -1.0
        J[:nf, nf + 1:] = -A_B[:, F].T
        J[nf, :nf] = 1.0
        J[nf + 1:, :nf] = A_B[:, F]
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        s[F] += step[:nf]
        p += step[nf]
        nu = nu + step[nf + 1:]
        if np.max(np.abs(step), initial=0.0) <= 1e-15 * scale:
            break
    if not (np.all(np.isfinite(s)) and np.isfinite(p) and np.all(np.isfinite(nu))):
        return None
    lam_low = np.zeros(len(pol.f))
    lam_up = np.zeros(len(pol.f))
    lam_low[B] = np.maximum(nu, 0.0)
    lam_up[B] = np.maximum(-nu, 0.0)
    return s, p, lam_low, lam_up


POLISH_THRESHOLDS = (1e-9, 1e-7, 1e-5, 1e-3)


def solve_separable_convex(costs: Sequence[CostFunction], pol: Polytope, tol: float = 1e-8,
                           max_iter: int = 200) -> DispatchResult:
    """Minimise ``sum_n costs[n](s_n)`` over ``pol`` with a KKT certificate.

    Parameters
    ----------
    costs : sequence of CostFunction
        One convex cost per generator, in ``pol.gen_buses`` order.
    pol : Polytope
        Feasible set.
    tol : float
        Largest accepted KKT residual of the returned point.

    Raises
    ------
    InfeasibleError
        If the polytope is empty.
    SolverError
        If the residual target is missed; ``residual`` holds the best value.
    """
    costs = tuple(costs)
    G = len(costs)
    if G != len(pol.smin):
        raise ValueError("one cost per generator expected")
    segs = _segments(costs, pol.smin, pol.smax)
    nv = len(segs)
    owner = np.array([g for g, *_ in segs])
    u = np.array([b - a for _, a, b, _ in segs])
    S = np.zeros((G, nv))
    S[owner, np.arange(nv)] = 1.0

    def fun(y):
        g = np.empty(nv)
        H = np.empty(nv)
        for j, (n, a, _, k) in enumerate(segs):
            d1, d2 = costs[n].piece_derivatives(k, a + y[j])
            g[j], H[j] = d1, d2
        return g, H

    base_flow = pol.A_g @ pol.smin + pol.offset
    AgS = pol.A_g @ S
    zero, lim = pol.zero, pol.limited
    A = np.vstack([np.ones((1, nv)), AgS[zero]])
    b = np.r_[pol.D - pol.smin.sum(), -base_flow[zero]]
    Gm = np.vstack([AgS[lim], -AgS[lim]])
    h = np.r_[pol.f[lim] - base_flow[lim], pol.f[lim] + base_flow[lim]]
    try:
        r = interior_point(fun, u, A, b, Gm, h, max_iter=max_iter)
    except SolverError:
        if not _feasible(pol):
            raise InfeasibleError("dispatch polytope is empty") from None
        raise
    s = np.clip(pol.smin + S @ r.x, pol.smin, pol.smax)
    price = float(r.y[0])
    L = len(pol.f)
    lam_up = np.zeros(L)
    lam_low = np.zeros(L)
    nl = len(lim)
    lam_up[lim] = r.v[:nl]
    lam_low[lim] = r.v[nl:]
    yz = r.y[1:]
    lam_up[zero] = np.maximum(-yz, 0.0)
    lam_low[zero] = np.maximum(yz, 0.0)
    best = _certify(pol, costs, s, price, lam_low, lam_up)
    for thr in POLISH_THRESHOLDS:
        if best[2].max <= 1e-3 * tol:
            break
        cand = _polish(costs, pol, s, price, lam_low, lam_up, thr)
        if cand is not None:
            cand = _certify(pol, costs, *cand)
            if cand[2].max < best[2].max:
                best = cand
    s, cert, rep = best
    price = cert.price
    obj = float(sum(c.value(x) for c, x in zip(costs, s)))
    if not rep.max <= tol:  # also rejects nan
        raise SolverError(f"dispatch KKT residual {rep.max:.3e} exceeds tolerance {tol:.1e}", residual=rep.max)
    return DispatchResult(s, obj, price, cert, rep, r.iterations, costs, pol)


def _feasible(pol: Polytope) -> bool:
    G = len(pol.smin)
    fin = np.isfinite(pol.f)
    A_ub = np.vstack([pol.A_g[fin], -pol.A_g[fin]]) if fin.any() else None
    b_ub = np.r_[pol.f[fin] - pol.offset[fin], pol.f[fin] + pol.offset[fin]] if fin.any() else None
    res = linprog(np.zeros(G), A_ub=A_ub, b_ub=b_ub, A_eq=np.ones((1, G)), b_eq=[pol.D],
                  bounds=list(zip(pol.smin, pol.smax)), method="highs")
    return res.status == 0


def economic_dispatch(m: Market, sf: ShiftFactors | None = None, tol: float = 1e-8) -> DispatchResult:
    """Socially optimal dispatch under the true costs."""
    return solve_separable_convex(m.costs(), polytope(m, sf), tol)


def equilibrium_dispatch(m: Market, sf: ShiftFactors | None = None, tol: float = 1e-8) -> DispatchResult:
    """Supply-function-equilibrium dispatch via the modified costs.

    The returned ``objective`` is the modified-cost objective; evaluate the
    true cost with ``true_cost(m, result.supply)``.
    """
    return solve_separable_convex(modified_costs(m), polytope(m, sf), tol)


def true_cost(m: Market, s) -> float:
    return float(sum(c.value(float(x)) for c, x in zip(m.costs(), s)))
