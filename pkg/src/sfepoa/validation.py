"""Modelling-assumption checks for markets.

Each check is named after the assumption it enforces:

``generator-count``       more than two generators.
``positive-demand``       total demand D > 0.
``cost-regularity``       convex, strictly increasing base costs with c(0) = 0.
``capacity-redundancy``   for every n, the other generators can cover D alone.
``strict-feasibility``    some supply profile satisfies every inequality strictly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .costs import Linear, PiecewiseLinear, Quadratic
from .errors import ValidationError
from .network import Market
from .powerflow import shift_factors

STRICT_TOL = 1e-9


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple
    #: optimal minimum slack of the strict-feasibility program (nan if not run)
    slack: float = float("nan")

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> tuple:
        return tuple(c for c in self.checks if not c.passed)

    def raise_if_failed(self):
        if not self.ok:
            msg = "; ".join(f"{c.name}: {c.detail}" for c in self.failures)
            raise ValidationError(f"market violates modelling assumptions ({msg})", self.failures)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def strict_feasibility_slack(m: Market, sf=None) -> float:
    """Largest tau such that a balanced profile has every inequality slack >= tau.

    Lines with a zero limit are kept as equalities (their flow must vanish),
    so strictness is measured on the relative interior they leave.  Returns
    ``-inf`` if even the equalities cannot be met.
    """
    sf = sf or shift_factors(m)
    D = m.total_demand
    G = m.n_generators
    A_g = sf.A_g
    offset = sf.A_l @ m.load_vector()
    f = m.network.limits()
    finite = np.isfinite(f) & (f > 0)
    zero = f == 0
    cap = max(1.0, D)

    # variables x = (s_1..s_G, tau); minimise -tau
    c = np.zeros(G + 1)
    c[-1] = -1.0
    rows, rhs = [], []
    for n in range(G):
        r = np.zeros(G + 1)
        r[n], r[-1] = -1.0, 1.0
        rows.append(r)
        rhs.append(-m.smin()[n])
        r = np.zeros(G + 1)
        r[n], r[-1] = 1.0, 1.0
        rows.append(r)
        rhs.append(m.smax()[n])
    for k in np.flatnonzero(finite):
        for sign in (1.0, -1.0):
            r = np.zeros(G + 1)
            r[:G] = sign * A_g[k]
            r[-1] = 1.0
            rows.append(r)
            rhs.append(f[k] - sign * offset[k])
    eq = [np.r_[np.ones(G), 0.0]]
    beq = [D]
    for k in np.flatnonzero(zero):
        eq.append(np.r_[A_g[k], 0.0])
        beq.append(-offset[k])
    bounds = [(None, None)] * G + [(-cap, cap)]
    res = linprog(c, A_ub=np.array(rows), b_ub=np.array(rhs), A_eq=np.array(eq), b_eq=np.array(beq),
                  bounds=bounds, method="highs")
    if res.status != 0:
        return float("-inf")
    tau = float(res.x[-1])
    if zero.any():
        rank = np.linalg.matrix_rank(np.vstack([np.ones(G), A_g[zero]]), tol=1e-10)
        if rank >= G:
            # the equalities pin down a single profile: no relative interior
            return min(tau, 0.0)
    return tau


def validate_market(m: Market, sf=None) -> ValidationReport:
    """Run every assumption check; never raises, failures are in the report."""
    checks = []
    G = m.n_generators
    D = m.total_demand
    checks.append(Check("generator-count", G > 2,
                        "" if G > 2 else f"requires more than two generators, found {G}"))
    checks.append(Check("positive-demand", D > 0, "" if D > 0 else "total demand must be positive"))

    bad = [b for b, g in m.generators.items() if not isinstance(g.cost, (Linear, Quadratic, PiecewiseLinear))]
    checks.append(Check("cost-regularity", not bad,
                        "" if not bad else f"generators {bad} have unsupported cost types"))

    smax = m.smax()
    short = [b for k, b in enumerate(m.gen_buses) if smax.sum() - smax[k] <= D]
    detail = ""
    if short:
        detail = "; ".join(
            f"without generator {b} the remaining capacity {smax.sum() - smax[k]:.6g} does not exceed demand {D:.6g}"
            for k, b in enumerate(m.gen_buses) if b in short
        )
    checks.append(Check("capacity-redundancy", not short, detail))

    slack = float("nan")
    if G > 0 and D > 0:
        slack = strict_feasibility_slack(m, sf)
        ok = slack > STRICT_TOL
        checks.append(Check("strict-feasibility", ok,
                            "" if ok else f"no strictly feasible supply profile (best slack {slack:.3e})"))
    else:
        checks.append(Check("strict-feasibility", False, "not checked: no generators or no demand"))
    return ValidationReport(tuple(checks), slack)


def require_valid(m: Market, sf=None) -> ValidationReport:
    rep = validate_market(m, sf)
    rep.raise_if_failed()
    return rep
