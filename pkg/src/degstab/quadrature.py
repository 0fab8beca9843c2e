"""Composite Gauss-Legendre quadrature on graded panels.

Integrands here are smooth on (0, 1] but carry fractional powers of x at
the left endpoint, so panels are graded geometrically toward 0.  Oscillatory
integrands get extra breakpoints at known sign changes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


_EPS = float(np.finfo(float).eps)


class QuadratureError(RuntimeError):
    """Raised when refinement does not reach the requested tolerance."""


@dataclass(frozen=True)
class QuadratureRule:
    """Fixed composite rule: ``order`` Gauss-Legendre nodes on every panel."""

    breakpoints: np.ndarray
    order: int = 20

    def __post_init__(self):
        bp = np.unique(np.asarray(self.breakpoints, dtype=float))
        if bp.size < 2:
            raise ValueError("need at least two breakpoints")
        object.__setattr__(self, "breakpoints", bp)

    @cached_property
    def _nodes_weights(self):
        t, w = np.polynomial.legendre.leggauss(self.order)
        a = self.breakpoints[:-1, None]
        b = self.breakpoints[1:, None]
        half = 0.5 * (b - a)
        nodes = (a + half * (t[None, :] + 1.0)).ravel()
        weights = (half * w[None, :]).ravel()
        return nodes, weights

    @property
    def nodes(self) -> np.ndarray:
        return self._nodes_weights[0]

    @property
    def weights(self) -> np.ndarray:
        return self._nodes_weights[1]

    @property
    def panels(self) -> int:
        return self.breakpoints.size - 1

    def refined(self) -> "QuadratureRule":
        """Bisect every panel."""
        bp = self.breakpoints
        mids = 0.5 * (bp[:-1] + bp[1:])
        return QuadratureRule(np.concatenate([bp, mids]), self.order)

    def integrate(self, f):
        """Apply the rule; ``f`` maps a node array to values with nodes on the last axis."""
        values = np.asarray(f(self.nodes))
        return values @ self.weights


def graded_breakpoints(a: float, b: float, floor: float, ratio: float = 0.25, extra=()) -> np.ndarray:
    """Breakpoints on [a, b] graded geometrically toward ``a``.

    Panels shrink by ``ratio`` from ``b`` until the first panel is
    [a, a + floor]; ``extra`` points inside (a, b) are merged in.
    """
    if not (0.0 < ratio < 1.0):
        raise ValueError("ratio must lie in (0, 1)")
    length = b - a
    offsets = [length]
    while offsets[-1] * ratio > floor:
        offsets.append(offsets[-1] * ratio)
    offsets.append(floor)
    pts = [a] + [a + o for o in offsets if o <= length]
    extra = [e for e in np.atleast_1d(np.asarray(extra, dtype=float)) if a < e < b]
    return np.unique(np.array(pts + extra + [b]))


def integrate_refining(f, rule: QuadratureRule, tol: float, max_refinements: int = 6):
    """Integrate ``f`` with ``rule``, bisecting all panels until two passes agree.

    Works for array-valued integrands; the agreement test is on the max
    absolute entry difference.  Returns ``(value, rule_used)``.
    """
    current = rule.integrate(f)
    for _ in range(max_refinements):
        rule = rule.refined()
        finer = rule.integrate(f)
        change = float(np.max(np.abs(finer - current)))
        if change <= tol:
            return finer, rule
        current = finer
    raise QuadratureError(f"no agreement to {tol:g} after {max_refinements} refinements (last change {change:.3g})")


def integrate_adaptive(f, a: float, b: float, tol: float = 1e-12, order: int = 20, breakpoints=None, max_depth: int = 50, max_panels: int = 20000):
    """Locally adaptive composite Gauss-Legendre for a scalar integrand.

    A panel is accepted when its one-panel estimate agrees with the sum over
    its two halves to within its share of ``tol``; otherwise it is split.
    """
    t, w = np.polynomial.legendre.leggauss(order)
    if breakpoints is None:
        breakpoints = [a, b]
    bp = np.unique(np.clip(np.asarray(breakpoints, dtype=float), a, b))
    lo, hi = bp[:-1], bp[1:]
    width = b - a

    def panel(lo, hi):
        half = 0.5 * (hi - lo)
        x = lo[:, None] + half[:, None] * (t[None, :] + 1.0)
        vals = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
        return (vals @ w) * half, (np.abs(vals) @ w) * half

    total = 0.0
    coarse, _ = panel(lo, hi)
    for _ in range(max_depth):
        mid = 0.5 * (lo + hi)
        left, left_abs = panel(lo, mid)
        right, right_abs = panel(mid, hi)
        fine = left + right
        err = np.abs(fine - coarse)
        # rounding floor: cancellation inside a panel leaves ~eps * int |f|
        ok = err <= np.maximum(tol * (hi - lo) / width, 64.0 * _EPS * (left_abs + right_abs))
        total += float(np.sum(fine[ok]))
        if np.all(ok):
            return total
        keep = ~ok
        if 2 * np.count_nonzero(keep) > max_panels:
            break
        lo = np.concatenate([lo[keep], mid[keep]])
        hi = np.concatenate([mid[keep], hi[keep]])
        coarse = np.concatenate([left[keep], right[keep]])
    raise QuadratureError(f"adaptive quadrature on [{a}, {b}] did not reach tol={tol:g}")
