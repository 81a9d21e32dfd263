"""Generator cost functions and the equilibrium-inducing modified cost.

All cost classes are immutable, vectorised over numpy arrays and satisfy
``c(0) = 0``.  Besides values they expose one-sided derivatives and a
piece structure (kinks plus per-piece derivatives) that the dispatch solver
uses to split a generator into smooth segments.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar, Sequence

import numpy as np

from .errors import UnsupportedCostError


class CostFunction:
    """Common interface of convex, strictly increasing costs with c(0) = 0."""

    kind: ClassVar[str] = "abstract"
    # subclasses provide ``breakpoints``: strictly increasing kink locations

    def value(self, s):
        raise NotImplementedError

    def integral(self, s):
        """Return the integral of the cost from 0 to ``s``."""
        raise NotImplementedError

    def piece_derivatives(self, k: int, x):
        """First and second derivative of piece ``k`` evaluated at ``x``."""
        raise NotImplementedError

    def piece_index(self, x: float) -> int:
        """Index of the piece whose interior contains ``x`` (right piece at a kink)."""
        return int(np.searchsorted(np.asarray(self.breakpoints, dtype=float), x, side="right"))

    def left_derivative(self, s: float) -> float:
        k = int(np.searchsorted(np.asarray(self.breakpoints, dtype=float), s, side="left"))
        return float(self.piece_derivatives(k, s)[0])

    def right_derivative(self, s: float) -> float:
        return float(self.piece_derivatives(self.piece_index(s), s)[0])

    def derivative(self, s: float) -> float:
        """Derivative at a point of differentiability (right derivative at a kink)."""
        return self.right_derivative(s)

    def is_kink(self, s: float, tol: float = 1e-9) -> bool:
        return any(abs(s - b) <= tol for b in self.breakpoints)

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __call__(self, s):
        return self.value(s)


@dataclass(frozen=True)
class Linear(CostFunction):
    """c(s) = a s with a > 0."""

    a: float
    kind: ClassVar[str] = "linear"
    breakpoints: ClassVar[tuple] = ()

    def __post_init__(self):
        if not (np.isfinite(self.a) and self.a > 0):
            raise UnsupportedCostError(f"linear cost slope must be positive, got {self.a}")

    def value(self, s):
        return self.a * np.asarray(s, dtype=float) if np.ndim(s) else self.a * float(s)

    def integral(self, s):
        return 0.5 * self.a * s * s

    def piece_derivatives(self, k, x):
        return self.a + 0.0 * x, 0.0 * x

    def to_dict(self):
        return {"kind": self.kind, "a": self.a}


@dataclass(frozen=True)
class Quadratic(CostFunction):
    """c(s) = a s^2 + b s with a >= 0, b > 0 (strictly increasing on s >= 0).

    ``b = 0`` is accepted when ``a > 0``: the cost is then strictly increasing
    on s > 0, which is all the analysis needs.
    """

    a: float
    b: float
    kind: ClassVar[str] = "quadratic"
    breakpoints: ClassVar[tuple] = ()

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise UnsupportedCostError("quadratic cost coefficients must be finite")
        if self.a < 0 or self.b < 0 or (self.a == 0 and self.b == 0):
            raise UnsupportedCostError(
                f"quadratic cost a*s^2 + b*s needs a >= 0, b >= 0, not both zero (a={self.a}, b={self.b})"
            )

    def value(self, s):
        return self.a * s * s + self.b * s

    def integral(self, s):
        return self.a * s**3 / 3.0 + 0.5 * self.b * s * s

    def piece_derivatives(self, k, x):
        return 2.0 * self.a * x + self.b, 2.0 * self.a + 0.0 * x

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "b": self.b}


@dataclass(frozen=True)
class PiecewiseLinear(CostFunction):
    """Convex piecewise-linear cost through the origin.

    ``slopes[k]`` applies on ``[breakpoints[k-1], breakpoints[k]]`` with the
    first slope starting at 0 and the last one extending to infinity, so
    ``len(slopes) == len(breakpoints) + 1``.  Consecutive equal slopes are
    merged on construction so every stored breakpoint is a genuine kink.
    """

    breakpoints: tuple
    slopes: tuple
    kind: ClassVar[str] = "piecewise_linear"

    def __post_init__(self):
        bps = tuple(float(b) for b in self.breakpoints)
        sl = tuple(float(a) for a in self.slopes)
        if len(sl) != len(bps) + 1:
            raise UnsupportedCostError("piecewise-linear cost needs len(slopes) == len(breakpoints) + 1")
        if any(not np.isfinite(v) for v in bps + sl):
            raise UnsupportedCostError("piecewise-linear cost data must be finite")
        if bps and (bps[0] <= 0 or any(b2 <= b1 for b1, b2 in zip(bps, bps[1:]))):
            raise UnsupportedCostError("breakpoints must be positive and strictly increasing")
        if sl[0] <= 0:
            raise UnsupportedCostError("piecewise-linear slopes must be positive")
        if any(a2 < a1 for a1, a2 in zip(sl, sl[1:])):
            raise UnsupportedCostError("piecewise-linear slopes must be nondecreasing (convexity)")
        keep_b, keep_s = [], [sl[0]]
        for b, a in zip(bps, sl[1:]):
            if a > keep_s[-1]:
                keep_b.append(b)
                keep_s.append(a)
        object.__setattr__(self, "breakpoints", tuple(keep_b))
        object.__setattr__(self, "slopes", tuple(keep_s))

    def _increments(self):
        return np.diff(np.asarray(self.slopes))

    def value(self, s):
        arr = np.asarray(s, dtype=float)
        out = self.slopes[0] * arr
        for b, da in zip(self.breakpoints, self._increments()):
            out = out + da * np.maximum(arr - b, 0.0)
        return out if np.ndim(s) else float(out)

    def integral(self, s):
        arr = np.asarray(s, dtype=float)
        out = 0.5 * self.slopes[0] * arr * arr
        for b, da in zip(self.breakpoints, self._increments()):
            out = out + 0.5 * da * np.maximum(arr - b, 0.0) ** 2
        return out if np.ndim(s) else float(out)

    def piece_derivatives(self, k, x):
        return self.slopes[k] + 0.0 * x, 0.0 * x

    def to_dict(self):
        return {"kind": self.kind, "breakpoints": list(self.breakpoints), "slopes": list(self.slopes)}


@dataclass(frozen=True)
class ModifiedCost(CostFunction):
    """Cost whose minimisation reproduces the supply-function equilibrium.

    With ``K = (N_g - 2) D`` the modified cost of a base cost ``c`` is::

        c_hat(s) = (1 + s/K) c(s) - (1/K) * integral_0^s c(x) dx

    so that ``c_hat'(s) = c'(s) (1 + s/K)``.  For a linear base this is
    ``a s + a s^2 / (2K)``; for a quadratic base it is cubic; for a
    piecewise-linear base it is piecewise quadratic with the same kinks.
    """

    base: CostFunction
    K: float
    kind: ClassVar[str] = "modified"

    def __post_init__(self):
        if not (np.isfinite(self.K) and self.K > 0):
            raise ValueError(f"modified cost needs K > 0 (more than two generators), got {self.K}")

    @property
    def breakpoints(self):  # type: ignore[override]
        return self.base.breakpoints

    def value(self, s):
        return (1.0 + s / self.K) * self.base.value(s) - self.base.integral(s) / self.K

    def integral(self, s):
        raise NotImplementedError("integral of a modified cost is not needed")

    def piece_derivatives(self, k, x):
        d1, d2 = self.base.piece_derivatives(k, x)
        scale = 1.0 + x / self.K
        return d1 * scale, d2 * scale + d1 / self.K

    def to_dict(self):
        return {"kind": self.kind, "K": self.K, "base": self.base.to_dict()}


def modified_cost(c: CostFunction, K: float) -> ModifiedCost:
    """Build the modified cost of ``c`` for scale ``K = (N_g - 2) D``."""
    return ModifiedCost(c, float(K))


def cost_from_dict(doc: dict) -> CostFunction:
    """Inverse of ``CostFunction.to_dict`` for the three base kinds."""
    if not isinstance(doc, dict) or "kind" not in doc:
        raise UnsupportedCostError(f"cost must be an object with a 'kind' field, got {doc!r}")
    kind = doc["kind"]
    try:
        if kind == "linear":
            return Linear(float(doc["a"]))
        if kind == "quadratic":
            return Quadratic(float(doc["a"]), float(doc["b"]))
        if kind in ("piecewise_linear", "pwl"):
            return PiecewiseLinear(tuple(doc["breakpoints"]), tuple(doc["slopes"]))
    except KeyError as exc:
        raise UnsupportedCostError(f"cost of kind {kind!r} is missing parameter {exc}") from None
    raise UnsupportedCostError(f"unsupported cost kind {kind!r}")


def two_piece(delta: float, t: float, slope: float = 1.0) -> PiecewiseLinear:
    """Cost with slope ``delta`` up to ``t`` and ``slope`` afterwards."""
    return PiecewiseLinear((t,), (delta, slope))


def as_cost_list(costs: Sequence[CostFunction]) -> list:
    out = list(costs)
    for c in out:
        if not isinstance(c, CostFunction):
            raise TypeError(f"expected CostFunction, got {type(c).__name__}")
    return out
