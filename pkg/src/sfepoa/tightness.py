"""Worst-case instances whose price of anarchy approaches the analytic bound.

On any weakly-cyclic network the construction relabels the spanning-tree
centre as bus 1 and gives it a cheap two-piece cost (slope ``delta`` up to a
kink ``t``, slope 1 after), while every other bus gets a linear cost of slope
``alpha``.  Flow limits are chosen so that the social optimum exports exactly
``Delta`` from bus 1 with every tree line saturated, while the equilibrium
stops bus 1 at its kink.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .costs import Linear, two_piece
from .errors import CertificationError, UnsupportedTopologyError
from .network import Generator, Line, Market, Network
from .poa import effective_limits, poa_upper_bound, price_of_anarchy
from .powerflow import shift_factors
from .topology import Cycle, RootedTree, cycle_decomposition, fundamental_cycles, spanning_tree, tree_center

ZERO_SNAP = 1e-12


@dataclass(frozen=True)
class TightnessParams:
    """Parameters of the construction; ``d1_hat = D/N + Delta``."""

    N: int
    D: float
    t: float
    delta: float
    Delta: float

    @classmethod
    def from_d1_hat(cls, N: int, D: float, t: float, d1_hat: float, delta: float) -> "TightnessParams":
        return cls(N, D, t, delta, d1_hat - D / N)

    @property
    def d1_hat(self) -> float:
        return self.D / self.N + self.Delta

    @property
    def alpha(self) -> float:
        N, D, t = self.N, self.D, self.t
        return (1.0 + t / ((N - 2) * D)) / (1.0 + (D - t) / ((N - 1) * (N - 2) * D))

    def problems(self) -> list:
        out = []
        if self.N < 4:
            out.append(f"needs at least 4 buses, got {self.N}")
        if not self.D > 0:
            out.append("demand must be positive")
        if not (self.D / self.N < self.t < self.d1_hat < self.D):
            out.append(f"needs D/N < t < d1_hat < D, got D/N={self.D / self.N:.6g}, t={self.t:.6g}, "
                       f"d1_hat={self.d1_hat:.6g}, D={self.D:.6g}")
        if not (0.0 < self.delta < 1.0):
            out.append(f"delta must lie in (0, 1), got {self.delta}")
        if not out and not self.alpha > 1.0:
            out.append("alpha must exceed 1")
        return out

    def check(self):
        probs = self.problems()
        if probs:
            raise ValueError("invalid tightness parameters: " + "; ".join(probs))


def analytical_poa(p: TightnessParams) -> float:
    """Closed-form PoA of the construction."""
    t, D, d1, a, dl = p.t, p.D, p.d1_hat, p.alpha, p.delta
    return (dl * t + a * (D - t)) / (d1 - t + dl * t + a * (D - d1))


def closed_form_bound(p: TightnessParams) -> float:
    """The analytic bound evaluated on the construction: ``1 + d1_hat / ((N-2) D)``."""
    return 1.0 + p.d1_hat / ((p.N - 2) * p.D)


def radial_flow_limits(tree: RootedTree, Delta: float) -> dict:
    """Limits ``(|H(j)| + 1) Delta / (N - 1)`` on every tree line, keyed by line index.

    ``j`` is the child end of the line and ``H(j)`` its set of descendants.
    """
    N = len(tree.order)
    return {tree.parent_edge[j]: tree.size[j] * Delta / (N - 1) for j in tree.order[1:]}


def cycle_adjustment(cycle: Cycle | None, baseline: Sequence[float], B: Sequence[float]):
    """Circulate ``omega`` around a cycle so weighted flows sum to zero.

    ``baseline`` and ``B`` are given per cycle edge in the cycle's walking
    orientation.  Returns ``(omega, adjusted)`` with
    ``omega = -(sum p/B) / (sum 1/B)``.
    """
    p = np.asarray(baseline, dtype=float)
    b = np.asarray(B, dtype=float)
    omega = -float(np.sum(p / b) / np.sum(1.0 / b))
    return omega, p + omega


def admittance_balancing(cycle: Cycle | None, baseline: Sequence[float]) -> np.ndarray:
    """Admittances making the oriented baseline satisfy ``sum p/B = 0``.

    Non-negative edges get ``B = 1``; negative edges share one scale
    ``sum|p_neg| / sum p_pos``.
    """
    p = np.asarray(baseline, dtype=float)
    pos, neg = p[p > 0].sum(), -p[p < 0].sum()
    if pos <= 0 or neg <= 0:
        raise ValueError("admittance balancing needs baseline flows of both signs around the cycle")
    return np.where(p < 0, neg / pos, 1.0)


def cycle_law_residual(baseline: Sequence[float], B: Sequence[float]) -> float:
    return float(np.sum(np.asarray(baseline, dtype=float) / np.asarray(B, dtype=float)))


@dataclass(frozen=True, eq=False)
class TightnessInstance:
    market: Market
    params: TightnessParams
    #: new bus id -> original bus id
    relabel: dict
    tree: RootedTree
    s_opt_expected: np.ndarray
    s_eq_expected: np.ndarray
    #: signed DC flows of the s_opt profile, per line
    flows_opt: np.ndarray
    #: per-cycle construction used: 'adjust' or 'balance'
    cycle_modes: tuple = ()

    @property
    def analytic_poa(self) -> float:
        return analytical_poa(self.params)

    @property
    def closed_form_bound(self) -> float:
        return closed_form_bound(self.params)


def build_instance(net: Network, p: TightnessParams) -> TightnessInstance:
    """Build the worst-case market on ``net`` for parameters ``p``.

    Raises ``UnsupportedTopologyError`` for networks that are not
    weakly-cyclic and ``ValueError`` for invalid parameters.
    """
    if not cycle_decomposition(net).is_weakly_cyclic:
        raise UnsupportedTopologyError("the tightness construction needs a weakly-cyclic network")
    if p.N != net.n_buses:
        raise ValueError(f"parameters are for {p.N} buses but the network has {net.n_buses}")
    p.check()
    N, D, Delta = p.N, p.D, p.Delta

    center = tree_center(spanning_tree(net))
    order = [center] + sorted(b for b in net.buses if b != center)
    to_new = {old: k + 1 for k, old in enumerate(order)}
    lines = tuple(Line(to_new[ln.from_bus], to_new[ln.to_bus], 1.0, math.inf) for ln in net.lines)
    rnet = Network(tuple(range(1, N + 1)), lines)
    tree = spanning_tree(rnet)
    rt = tree.rooted(1)

    # tree flows of the optimal profile, signed in stored line orientation
    flows = np.zeros(rnet.n_lines)
    for e, val in radial_flow_limits(rt, Delta).items():
        ln = rnet.lines[e]
        child = ln.to_bus if rt.parent.get(ln.to_bus) == ln.from_bus else ln.from_bus
        flows[e] = val if ln.to_bus == child else -val
    B = np.ones(rnet.n_lines)
    modes = []
    for cyc in fundamental_cycles(rnet, tree):
        idx = np.array(cyc.edges)
        sg = np.array(cyc.signs)
        oriented = sg * flows[idx]
        chord = next(e for e in cyc.edges if e not in set(tree.edges))
        a, b = rnet.lines[chord].ends
        if rt.is_ancestor(a, b) or rt.is_ancestor(b, a):
            _, adjusted = cycle_adjustment(cyc, oriented, B[idx])
            flows[idx] = sg * adjusted
            modes.append("adjust")
        else:
            B[idx] = admittance_balancing(cyc, oriented)
            modes.append("balance")
    flows[np.abs(flows) <= ZERO_SNAP * max(1.0, Delta)] = 0.0
    limits = np.abs(flows)
    rnet = Network(rnet.buses, tuple(Line(ln.from_bus, ln.to_bus, float(bb), float(f))
                                      for ln, bb, f in zip(rnet.lines, B, limits)))
    rt = spanning_tree(rnet).rooted(1)

    gens = {1: Generator(0.0, D, two_piece(p.delta, p.t))}
    for n in range(2, N + 1):
        gens[n] = Generator(0.0, D, Linear(p.alpha))
    market = Market(rnet, {n: D / N for n in rnet.buses}, gens)
    s_opt = np.r_[p.d1_hat, np.full(N - 1, (D - p.d1_hat) / (N - 1))]
    s_eq = np.r_[p.t, np.full(N - 1, (D - p.t) / (N - 1))]
    return TightnessInstance(market, p, {v: k for k, v in to_new.items()}, rt, s_opt, s_eq, flows, tuple(modes))


def instance_checks(inst: TightnessInstance, sf=None) -> dict:
    """Structural properties the construction promises, as named residuals.

    * ``saturation``: max | |p*| - f | over limited lines under the optimum profile.
    * ``fraction``: max deviation of p** from ((t - D/N)/Delta) p*.
    * ``root_dominance``: max(0, max_n cap_n - cap_1) of the local network caps.
    * ``closed_form``: |analytic bound - computed bound|.
    """
    m = inst.market
    sf = sf or shift_factors(m)
    d = m.load_vector()
    p_opt = sf.A_g @ inst.s_opt_expected + sf.A_l @ d
    p_eq = sf.A_g @ inst.s_eq_expected + sf.A_l @ d
    f = m.network.limits()
    frac = (inst.params.t - inst.params.D / inst.params.N) / inst.params.Delta
    els = effective_limits(m)
    caps = {n: m.loads.get(n, 0.0) + els[n].total for n in m.gen_buses}
    bound = poa_upper_bound(m).value
    return {
        "saturation": float(np.max(np.abs(np.abs(p_opt) - f))),
        "fraction": float(np.max(np.abs(p_eq - frac * p_opt))),
        "root_dominance": float(max(0.0, max(caps.values()) - caps[1])),
        "closed_form": abs(bound - inst.closed_form_bound),
    }


@dataclass(frozen=True)
class SweepRow:
    step: int
    t: float
    d1_hat: float
    delta: float
    alpha: float
    poa_analytic: float
    poa_numeric: float
    bound: float
    gap: float
    kkt_residual: float = float("nan")


@dataclass(frozen=True)
class SweepResult:
    rows: tuple
    gap: float

    @property
    def final(self) -> SweepRow:
        return self.rows[-1]


SWEEP_HEADER = ("step", "t", "d1_hat", "delta", "alpha", "PoA_analytic", "PoA_numeric", "bound", "gap")


def schedule(N: int, D: float, eta: float) -> TightnessParams:
    """Parameters for one sweep step.

    ``d1_hat = D (1 - eta^2)``, ``t = d1_hat - eta D`` and ``delta = eta^2`` so
    that ``(D - d1_hat)/(d1_hat - t) = eta`` and ``delta t/(d1_hat - t) < eta``
    both vanish while ``d1_hat`` tends to ``D``.
    """
    d1 = D * (1.0 - eta * eta)
    return TightnessParams.from_d1_hat(N, D, d1 - eta * D, d1, eta * eta)


def tightness_gap(net: Network, eps: float, D: float | None = None, numeric: bool = True,
                  max_steps: int = 40, tol: float = 1e-8) -> SweepResult:
    """Halve ``eta`` until the analytic bound exceeds the analytic PoA by less than ``eps``.

    Every step builds the instance and, with ``numeric`` set, solves both
    dispatches to cross-check the analytic PoA and verifies that the bound
    computed from the network equals the closed form.  Steps whose
    parameters fall outside ``D/N < t < d1_hat < D`` are skipped.

    Raises
    ------
    CertificationError
        If ``max_steps`` halvings do not bring the gap below ``eps``;
        ``best`` holds the smallest gap reached.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    N = net.n_buses
    D = float(N) if D is None else float(D)
    rows = []
    best = math.inf
    for k in range(1, max_steps + 1):
        p = schedule(N, D, 2.0 ** -k)
        if p.problems():
            continue
        inst = build_instance(net, p)
        pa = analytical_poa(p)
        bd = closed_form_bound(p)
        pn, res = float("nan"), float("nan")
        if numeric:
            rep = price_of_anarchy(inst.market, tol=tol)
            pn = rep.poa
            res = max(rep.optimum.residual, rep.equilibrium.residual)
            bd = rep.bound_thm1
        gap = bd - pa
        best = min(best, gap)
        rows.append(SweepRow(k, p.t, p.d1_hat, p.delta, p.alpha, pa, pn, bd, gap, res))
        if gap < eps:
            return SweepResult(tuple(rows), gap)
    raise CertificationError(f"gap did not drop below {eps} within {max_steps} steps (best {best:.3e})", best)
