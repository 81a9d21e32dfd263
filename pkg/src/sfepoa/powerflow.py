"""DC power flow: shift factors and an independent tree/cycle flow solver.

The shift-factor route inverts the reduced weighted Laplacian.  The
tree/cycle route never forms a Laplacian: it pushes injections up a spanning
tree and then fixes one circulation per chord so the angle differences
around each cycle sum to zero.  The two routes are used to cross-check each
other.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import linalg

from .errors import NetworkError, PowerFlowError, UnsupportedTopologyError
from .network import BusId, Market, Network

BALANCE_TOL = 1e-9
PIVOT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ShiftFactors:
    """Power transfer distribution factors for one slack choice.

    ``ptdf[l, k]`` is the flow on line ``l`` per unit injected at bus
    ``buses[k]`` and withdrawn at the slack.  ``A_g`` restricts the columns to
    generator buses; ``A_l = -ptdf`` maps loads (withdrawals) to flows, so
    that flows are ``A_g @ s + A_l @ d``.
    """

    ptdf: np.ndarray
    buses: tuple
    gen_buses: tuple
    slack: BusId

    @property
    def A_g(self) -> np.ndarray:
        idx = [self.buses.index(b) for b in self.gen_buses]
        return self.ptdf[:, idx]

    @property
    def A_l(self) -> np.ndarray:
        return -self.ptdf


def incidence_matrix(net: Network) -> np.ndarray:
    """Line-by-bus incidence matrix: +1 at the from bus, -1 at the to bus."""
    inc = np.zeros((net.n_lines, net.n_buses))
    for k, ln in enumerate(net.lines):
        inc[k, net.index[ln.from_bus]] = 1.0
        inc[k, net.index[ln.to_bus]] = -1.0
    return inc


def build_shift_factors(net: Network, slack: BusId | None = None, gen_buses: Sequence[BusId] = ()) -> ShiftFactors:
    """Compute the PTDF matrix by dense LU of the reduced Laplacian.

    Parameters
    ----------
    net : Network
        Connected network.
    slack : int, optional
        Reference bus; defaults to the lowest bus id.
    gen_buses : sequence of int
        Buses whose columns form ``A_g``.

    Returns
    -------
    ShiftFactors
    """
    if slack is None:
        slack = min(net.buses)
    if slack not in net.index:
        raise NetworkError(f"slack bus {slack} is not in the network")
    inc = incidence_matrix(net)
    bvec = net.susceptances()
    lap = inc.T @ (bvec[:, None] * inc)
    keep = [k for k, b in enumerate(net.buses) if b != slack]
    ptdf = np.zeros((net.n_lines, net.n_buses))
    if keep:
        lred = lap[np.ix_(keep, keep)]
        lu, piv = linalg.lu_factor(lred, check_finite=True)
        if np.min(np.abs(np.diag(lu))) < PIVOT_TOL:
            raise NetworkError("reduced Laplacian is singular; network is disconnected or ill-conditioned")
        theta = linalg.lu_solve((lu, piv), np.eye(len(keep)))
        ptdf[:, keep] = (bvec[:, None] * inc[:, keep]) @ theta
    for b in gen_buses:
        if b not in net.index:
            raise NetworkError(f"generator bus {b} is not in the network")
    return ShiftFactors(ptdf, net.buses, tuple(gen_buses), slack)


def shift_factors(m: Market, slack: BusId | None = None) -> ShiftFactors:
    """Shift factors of a market's network with its generator columns."""
    return build_shift_factors(m.network, slack, m.gen_buses)


def _as_vector(profile, keys: Sequence[BusId]) -> np.ndarray:
    if isinstance(profile, Mapping):
        unknown = set(profile) - set(keys)
        if unknown:
            raise PowerFlowError(f"profile references unknown buses {sorted(unknown)}")
        return np.array([float(profile.get(k, 0.0)) for k in keys])
    arr = np.asarray(profile, dtype=float)
    if arr.shape != (len(keys),):
        raise PowerFlowError(f"profile has shape {arr.shape}, expected ({len(keys)},)")
    return arr


def line_flows(sf: ShiftFactors, s, d) -> np.ndarray:
    """Flows ``A_g s + A_l d`` for a balanced supply/load pair.

    ``s`` is ordered like ``sf.gen_buses`` (or a bus -> MW map) and ``d``
    like ``sf.buses`` (or a map).
    """
    s = _as_vector(s, sf.gen_buses)
    d = _as_vector(d, sf.buses)
    imbalance = s.sum() - d.sum()
    if abs(imbalance) > BALANCE_TOL * max(1.0, abs(d.sum())):
        raise PowerFlowError(f"injections are unbalanced by {imbalance:.3e}")
    return sf.A_g @ s + sf.A_l @ d


def injection_flows(sf: ShiftFactors, injections) -> np.ndarray:
    """Flows produced by a balanced nodal injection vector."""
    inj = _as_vector(injections, sf.buses)
    if abs(inj.sum()) > BALANCE_TOL * max(1.0, np.abs(inj).sum()):
        raise PowerFlowError(f"injections are unbalanced by {inj.sum():.3e}")
    return sf.ptdf @ inj


def _kruskal(net: Network) -> list:
    parent = {b: b for b in net.buses}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    tree = []
    for k, ln in enumerate(net.lines):
        ra, rb = find(ln.from_bus), find(ln.to_bus)
        if ra != rb:
            parent[ra] = rb
            tree.append(k)
    return tree


def tree_cycle_flows(net: Network, injections) -> np.ndarray:
    """Solve DC flows on a weakly-cyclic network without a Laplacian.

    Conservation fixes the flow of every spanning-tree edge once each chord's
    flow is known; each chord closes one cycle, and because cycles share no
    edge the circulation on each one is found independently from the zero
    angle-sum law ``sum(p / B) = 0``.
    """
    inj = _as_vector(injections, net.buses)
    if abs(inj.sum()) > BALANCE_TOL * max(1.0, np.abs(inj).sum()):
        raise PowerFlowError(f"injections are unbalanced by {inj.sum():.3e}")
    tree = _kruskal(net)
    in_tree = set(tree)
    tree_adj = {b: [] for b in net.buses}
    for k in tree:
        ln = net.lines[k]
        tree_adj[ln.from_bus].append((ln.to_bus, k))
        tree_adj[ln.to_bus].append((ln.from_bus, k))
    root = net.buses[0]
    parent = {root: (None, None)}
    order = [root]
    for u in order:
        for v, k in tree_adj[u]:
            if v not in parent:
                parent[v] = (u, k)
                order.append(v)

    # fundamental cycle of each chord as a list of (line, sign) pairs, where
    # sign = +1 if the cycle traverses the line in its stored direction
    def path_to_root(x):
        path = [x]
        while parent[x][0] is not None:
            x = parent[x][0]
            path.append(x)
        return path

    cycles = []
    used = set()
    for k, ln in enumerate(net.lines):
        if k in in_tree:
            continue
        a, b = ln.from_bus, ln.to_bus
        pa, pb = path_to_root(a), path_to_root(b)
        common = set(pa) & set(pb)
        lca = next(x for x in pa if x in common)
        cyc = [(k, 1.0)]
        # walk from b up to lca (child -> parent moves), then down to a
        x = b
        while x != lca:
            p, e = parent[x]
            cyc.append((e, 1.0 if net.lines[e].from_bus == x else -1.0))
            x = p
        down = []
        x = a
        while x != lca:
            p, e = parent[x]
            down.append((e, 1.0 if net.lines[e].from_bus == p else -1.0))
            x = p
        cyc.extend(reversed(down))
        for e, _ in cyc:
            if e in used:
                raise UnsupportedTopologyError("network is not weakly-cyclic: a line lies on two cycles")
            used.add(e)
        cycles.append(cyc)

    # base flows: chords carry zero, tree edges carry subtree injections
    flows = np.zeros(net.n_lines)
    subtotal = {b: inj[net.index[b]] for b in net.buses}
    for v in reversed(order[1:]):
        p, e = parent[v]
        sign = 1.0 if net.lines[e].from_bus == v else -1.0
        flows[e] = sign * subtotal[v]
        subtotal[p] += subtotal[v]

    bvec = net.susceptances()
    for cyc in cycles:
        idx = np.array([e for e, _ in cyc])
        sg = np.array([s for _, s in cyc])
        oriented = sg * flows[idx]
        omega = -np.sum(oriented / bvec[idx]) / np.sum(1.0 / bvec[idx])
        flows[idx] += sg * omega
    return flows
