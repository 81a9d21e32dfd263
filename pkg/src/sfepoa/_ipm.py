"""Primal-dual interior-point method for separable convex programs.

Solves::

    minimise    sum_j phi_j(x_j)
    subject to  0 <= x <= u,   A x = b,   G x <= h

where ``phi_j`` are convex and twice differentiable on ``[0, u_j]``.  The
Hessian is diagonal, so each Newton step costs one dense LU of the reduced
KKT matrix.  Mehrotra's predictor-corrector rule picks the centring
parameter.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import InfeasibleError, SolverError


@dataclass
class IpmResult:
    x: np.ndarray
    y: np.ndarray  # equality duals (A^T y enters stationarity with a minus sign)
    v: np.ndarray  # inequality duals, >= 0
    zl: np.ndarray
    zu: np.ndarray
    iterations: int
    mu: float
    residual: float  # max scaled primal/dual residual at exit


def independent_rows(A: np.ndarray, b: np.ndarray, tol: float = 1e-10):
    """Indices of a maximal independent subset of rows, scanned in order.

    Raises ``InfeasibleError`` if a dependent row has an inconsistent
    right-hand side.
    """
    keep, basis = [], []
    for i, row in enumerate(A):
        r = row.astype(float).copy()
        for q in basis:
            r -= (q @ r) * q
        nr = np.linalg.norm(r)
        if nr > tol * max(1.0, np.linalg.norm(row)):
            keep.append(i)
            basis.append(r / nr)
    drop = [i for i in range(len(A)) if i not in keep]
    if drop:
        Ak = A[keep]
        coef, *_ = np.linalg.lstsq(Ak.T, A[drop].T, rcond=None)
        pred = coef.T @ b[keep]
        if np.max(np.abs(pred - b[drop])) > 1e-8 * max(1.0, np.max(np.abs(b))):
            raise InfeasibleError("equality constraints are inconsistent")
    return keep


REG = 1e-13
NEAR_CONVERGED = 1e-8
MAX_STEP_FRACTION = 0.99995


def _max_step(z, dz):
    neg = dz < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-z[neg] / dz[neg])))


def interior_point(fun, u, A, b, G, h, *, tol=1e-11, max_iter=200) -> IpmResult:
    """Run the predictor-corrector iteration.

    ``fun(x)`` returns the gradient and diagonal Hessian of the objective.
    Near the end of a degenerate solve the directions can overflow; this is
    detected explicitly and the best iterate is returned if it is already
    within ``NEAR_CONVERGED``, so floating-point warnings are silenced.
    """
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _iterate(fun, u, A, b, G, h, tol, max_iter)


def _iterate(fun, u, A, b, G, h, tol, max_iter) -> IpmResult:
    u = np.asarray(u, dtype=float)
    n = u.size
    A = np.asarray(A, dtype=float).reshape(-1, n)
    b = np.asarray(b, dtype=float)
    G = np.asarray(G, dtype=float).reshape(-1, n)
    h = np.asarray(h, dtype=float)
    me, mi = A.shape[0], G.shape[0]

    keep = independent_rows(A, b) if me else []
    Ak, bk = A[keep], b[keep]
    mk = len(keep)

    x = 0.5 * u
    g0, _ = fun(x)
    # objective scaling keeps the duals O(1)
    oscale = max(1.0, float(np.max(np.abs(g0))))

    def sfun(xx):
        g, H = fun(xx)
        return g / oscale, H / oscale

    w = np.maximum(h - G @ x, 1.0) if mi else np.zeros(0)
    v = np.ones(mi)
    zl = np.ones(n)
    zu = np.ones(n)
    t = u - x  # upper slack, iterated separately so it never cancels to zero
    y = np.zeros(mk)
    nc = 2 * n + mi

    best = np.inf
    best_state = None
    it = 0
    for it in range(1, max_iter + 1):
        g, H = sfun(x)
        ru = x + t - u
        rd = g - Ak.T @ y + G.T @ v - zl + zu
        re = Ak @ x - bk
        ri = G @ x + w - h
        mu = (x @ zl + t @ zu + w @ v) / nc
        res = max(
            np.max(np.abs(rd), initial=0.0) / (1.0 + np.max(np.abs(g))),
            np.max(np.abs(re), initial=0.0) / (1.0 + np.max(np.abs(bk), initial=0.0)),
            np.max(np.abs(ri), initial=0.0) / (1.0 + np.max(np.abs(h), initial=0.0)),
            np.max(np.abs(ru), initial=0.0) / (1.0 + np.max(u, initial=0.0)),
        )
        merit = max(res, mu)
        if merit < best:
            best = merit
            best_state = (x, t, y, v, w, zl, zu, it, mu, res)
        if res <= tol and mu <= tol * 0.1:
            break

        vw = v / w if mi else np.zeros(0)
        # tiny regularisation keeps the factorisation nonsingular on degenerate LPs
        Mdiag = H + zl / x + zu / t + REG
        M = np.diag(Mdiag)
        if mi:
            M += G.T @ (vw[:, None] * G)
        K = np.zeros((n + mk, n + mk))
        K[:n, :n] = M
        K[:n, n:] = -Ak.T
        K[n:, :n] = Ak
        K[n:, n:] = -REG * np.eye(mk)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", linalg.LinAlgWarning)
                lu = linalg.lu_factor(K, check_finite=True)
        except (ValueError, linalg.LinAlgError) as exc:
            if best <= NEAR_CONVERGED:
                break
            raise SolverError(f"KKT factorisation failed: {exc}", residual=best) from None

        def solve(rcl, rcu, rcw):
            rhs1 = -rd + rcl / x - (rcu + zu * ru) / t
            if mi:
                rhs1 -= G.T @ (vw * ri + rcw / w)
            sol = linalg.lu_solve(lu, np.r_[rhs1, -re], check_finite=False)
            dx, dy = sol[:n], sol[n:]
            if mi:
                Gdx = G @ dx
                dv = (rcw + v * (ri + Gdx)) / w
                dw = -ri - Gdx
            else:
                dv = dw = np.zeros(0)
            dt = -ru - dx
            dzl = (rcl - zl * dx) / x
            dzu = (rcu - zu * dt) / t
            return dx, dt, dy, dv, dw, dzl, dzu

        def step_len(dx, dt, dv, dw, dzl, dzu):
            return min(_max_step(x, dx), _max_step(t, dt), _max_step(w, dw) if mi else 1.0,
                       _max_step(zl, dzl), _max_step(zu, dzu), _max_step(v, dv) if mi else 1.0)

        # predictor
        dx, dt, dy, dv, dw, dzl, dzu = solve(-x * zl, -t * zu, -w * v)
        if not all(np.all(np.isfinite(d)) for d in (dx, dt, dy, dv, dw, dzl, dzu)):
            if best <= NEAR_CONVERGED:
                break  # direction lost to round-off at an essentially optimal point
            raise SolverError("interior-point direction is not finite", residual=best)
        a = step_len(dx, dt, dv, dw, dzl, dzu)
        mu_aff = ((x + a * dx) @ (zl + a * dzl) + (t + a * dt) @ (zu + a * dzu)
                  + (w + a * dw) @ (v + a * dv)) / nc
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        # corrector
        rcl = sigma * mu - x * zl - dx * dzl
        rcu = sigma * mu - t * zu - dt * dzu
        rcw = sigma * mu - w * v - dw * dv
        dx, dt, dy, dv, dw, dzl, dzu = solve(rcl, rcu, rcw)
        if not all(np.all(np.isfinite(d)) for d in (dx, dt, dy, dv, dw, dzl, dzu)):
            if best <= NEAR_CONVERGED:
                break
            raise SolverError("interior-point direction is not finite", residual=best)
        a = step_len(dx, dt, dv, dw, dzl, dzu)
        eta = min(MAX_STEP_FRACTION, max(0.9, 1.0 - 10.0 * mu))
        a = min(1.0, eta * a)
        x = x + a * dx
        t = t + a * dt
        y = y + a * dy
        zl = zl + a * dzl
        zu = zu + a * dzu
        if mi:
            v = v + a * dv
            w = w + a * dw
    else:
        if best > NEAR_CONVERGED:
            raise SolverError(f"interior point did not converge in {max_iter} iterations", residual=best)
    if max(res, mu) > best:
        # breakdown or stall: fall back to the best iterate seen
        x, t, y, v, w, zl, zu, it, mu, res = best_state

    yfull = np.zeros(me)
    yfull[keep] = y
    return IpmResult(x, yfull * oscale, v * oscale, zl * oscale, zu * oscale, it, mu * oscale, res)
