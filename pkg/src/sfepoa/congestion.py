"""Congestion sweep: how the bounds react as flow limits tighten.

All finite flow limits are multiplied by one common scale.  For each target
share of congested lines the scale is found by bisection, and the PoA and
both bounds are reported at that scale.  A line counts as congested when
its relative slack ``(f - |flow|) / f`` at the equilibrium dispatch falls
below a threshold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dispatch import equilibrium_dispatch
from .errors import SolverError, ValidationError
from .network import Market
from .poa import price_of_anarchy
from .powerflow import shift_factors
from .validation import validate_market

CONGESTION_THRESHOLD = 1e-6
SWEEP_COLUMNS = ("target_pct", "achieved_pct", "congested", "scale", "poa", "bound_thm1", "bound_indep", "status")


@dataclass(frozen=True)
class CongestionSweepConfig:
    targets: tuple = tuple(range(0, 95, 5))
    threshold: float = CONGESTION_THRESHOLD
    scale_tol: float = 1e-6
    max_bisections: int = 60
    solver_tol: float = 1e-8

    def __post_init__(self):
        if any(not 0 <= t < 100 for t in self.targets):
            raise ValueError("congestion targets must lie in [0, 100)")
        if not self.threshold > 0:
            raise ValueError("congestion threshold must be positive")


@dataclass(frozen=True)
class SweepPoint:
    target_pct: float
    achieved_pct: float
    congested: int
    scale: float
    poa: float
    bound_thm1: float
    bound_indep: float
    status: str = "ok"

    def as_row(self) -> tuple:
        return tuple(getattr(self, c) for c in SWEEP_COLUMNS)


def congested_lines(m: Market, flows, threshold: float = CONGESTION_THRESHOLD) -> list:
    """Indices of finite-limit lines whose relative slack is below ``threshold``."""
    f = m.network.limits()
    fl = np.asarray(flows, dtype=float)
    out = []
    for l in np.flatnonzero(np.isfinite(f)):
        if f[l] == 0 or (f[l] - abs(fl[l])) / f[l] < threshold:
            out.append(int(l))
    return out


def _count(m: Market, scale: float, cfg: CongestionSweepConfig):
    """Congested-line count at ``scale``, or ``None`` if the scaled market is invalid."""
    ms = m.scale_limits(scale)
    if not validate_market(ms).ok:
        return None
    try:
        eq = equilibrium_dispatch(ms, shift_factors(ms), cfg.solver_tol)
    except SolverError:
        return None
    return len(congested_lines(ms, eq.flows, cfg.threshold))


def _uncongested_scale(m: Market, cfg: CongestionSweepConfig) -> float:
    """A scale at which no line is congested at the equilibrium."""
    free = m.with_limits(np.full(m.network.n_lines, math.inf))
    eq = equilibrium_dispatch(free, shift_factors(free), cfg.solver_tol)
    f = m.network.limits()
    fin = np.isfinite(f) & (f > 0)
    if not fin.any():
        return 1.0
    need = np.max(np.abs(eq.flows[fin]) / f[fin])
    return float(max(1.0, 2.0 * need + 1e-3))


def _min_valid_scale(m: Market, hi: float, cfg: CongestionSweepConfig) -> float:
    """Smallest scale (to ``scale_tol``) keeping the market strictly feasible."""
    lo = 0.0
    if validate_market(m.scale_limits(hi)).ok is False:
        raise ValidationError("the market is not strictly feasible even with relaxed limits")
    for _ in range(cfg.max_bisections):
        if hi - lo <= cfg.scale_tol * hi:
            break
        mid = 0.5 * (lo + hi)
        if validate_market(m.scale_limits(mid)).ok:
            hi = mid
        else:
            lo = mid
    return hi


def congestion_sweep(m: Market, cfg: CongestionSweepConfig | None = None) -> list:
    """One ``SweepPoint`` per target percentage, in the order of ``cfg.targets``.

    The congested-line count is treated as nonincreasing in the scale; every
    target is bisected on ``[s_min, s_free]`` where ``s_min`` is the smallest
    strictly feasible scale and ``s_free`` leaves all lines uncongested.  A
    target is reached when the count is within one line of
    ``target * L / 100``; otherwise the closest scale found is reported with
    status ``unreachable``.
    """
    cfg = cfg or CongestionSweepConfig()
    f = m.network.limits()
    L = int(np.count_nonzero(np.isfinite(f)))
    if L == 0:
        raise ValidationError("congestion sweep needs at least one line with a finite limit")
    s_free = _uncongested_scale(m, cfg)
    s_min = _min_valid_scale(m, s_free, cfg)
    cache = {}

    def count(s):
        if s not in cache:
            cache[s] = _count(m, s, cfg)
        return cache[s]

    points = []
    for target in cfg.targets:
        want = target * L / 100.0
        lo, hi = s_min, s_free
        best = None
        for _ in range(cfg.max_bisections):
            mid = 0.5 * (lo + hi)
            c = count(mid)
            if c is None:
                lo = mid
                continue
            if best is None or abs(c - want) < abs(best[1] - want):
                best = (mid, c)
            if abs(c - want) <= 1.0:
                break
            if c > want:
                lo = mid
            else:
                hi = mid
            if hi - lo <= cfg.scale_tol * hi:
                break
        if best is None:
            points.append(SweepPoint(target, math.nan, -1, math.nan, math.nan, math.nan, math.nan, "unreachable"))
            continue
        scale, c = best
        status = "ok" if abs(c - want) <= 1.0 else "unreachable"
        ms = m.scale_limits(scale)
        rep = price_of_anarchy(ms, tol=cfg.solver_tol)
        achieved = 100.0 * c / L
        points.append(SweepPoint(target, achieved, c, scale, rep.poa, rep.bound_thm1,
                                 rep.bound_network_independent, status))
    return points
