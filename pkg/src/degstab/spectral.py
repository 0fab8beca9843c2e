"""Eigen-decomposition of A u = -(x^alpha u_x)_x on (0, 1).

Dirichlet at x = 1; at x = 0 Dirichlet (weak regime, alpha < 1) or zero
flux x^alpha u_x = 0 (strong regime, 1 <= alpha < 3/2).  In both regimes

    lambda_k = k_alpha^2 j_{nu,k}^2,
    phi_k(x) = sqrt(2 k_alpha) / |J'_nu(j_{nu,k})| x^{(1-alpha)/2} J_nu(j_{nu,k} x^{k_alpha}),

with k_alpha = (2 - alpha)/2 and nu = |1 - alpha| / (2 - alpha).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bessel import ZeroTable, bessel_j, bessel_j_and_deriv, bessel_zeros
from .quadrature import QuadratureRule, graded_breakpoints, integrate_refining

ALPHA_MAX = 1.5
WEAK_GAP_CONSTANT = 7.0 * math.pi / 16.0
STRONG_GAP_CONSTANT = 0.5 * math.pi


class ProblemDomainError(ValueError):
    pass


@dataclass(frozen=True)
class DegenerateProblem:
    alpha: float
    regime: str
    nu: float
    k_alpha: float

    @property
    def weak(self) -> bool:
        return self.regime == "weak"

    @property
    def power(self) -> float:
        """Exponent (1 - alpha)/2 of the algebraic prefactor."""
        return 0.5 * (1.0 - self.alpha)


def make_problem(alpha: float) -> DegenerateProblem:
    alpha = float(alpha)
    if not math.isfinite(alpha) or alpha < 0.0 or alpha >= ALPHA_MAX:
        raise ProblemDomainError(f"alpha={alpha} outside the admissible range [0, 3/2)")
    k_alpha = 0.5 * (2.0 - alpha)
    if alpha < 1.0:
        return DegenerateProblem(alpha, "weak", (1.0 - alpha) / (2.0 - alpha), k_alpha)
    return DegenerateProblem(alpha, "strong", (alpha - 1.0) / (2.0 - alpha), k_alpha)


@dataclass(frozen=True)
class EigenSystem:
    problem: DegenerateProblem
    zero_table: ZeroTable = field(repr=False)
    lambdas: np.ndarray = field(repr=False)
    normalizers: np.ndarray = field(repr=False)
    deriv_at_zero: np.ndarray = field(repr=False)  # J'_nu(j_{nu,k}), signed

    @property
    def count(self) -> int:
        return len(self.lambdas)

    @property
    def zeros(self) -> np.ndarray:
        return self.zero_table.zeros

    def _index(self, ks):
        if ks is None:
            return np.arange(self.count)
        ks = np.atleast_1d(np.asarray(ks, dtype=int))
        if np.any(ks < 1) or np.any(ks > self.count):
            raise IndexError(f"eigen-index out of range 1..{self.count}")
        return ks - 1

    def values(self, x, ks=None) -> np.ndarray:
        """phi_k(x) as an array of shape (len(ks), len(x)); 1-based ``ks``."""
        p = self.problem
        idx = self._index(ks)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty((idx.size, x.size))
        pos = x > 0
        if np.any(pos):
            xp = x[pos]
            z = self.zeros[idx, None] * xp[None, :] ** p.k_alpha
            jz = np.asarray(bessel_j(p.nu, z.ravel())).reshape(z.shape)
            out[:, pos] = self.normalizers[idx, None] * xp[None, :] ** p.power * jz
        if np.any(~pos):
            out[:, ~pos] = self.value_at_origin(idx + 1)[:, None]
        return out

    def value_at_origin(self, ks=None) -> np.ndarray:
        """Continuous extension of phi_k to x = 0."""
        idx = self._index(ks)
        p = self.problem
        if p.weak:
            return np.zeros(idx.size)
        lead = (0.5 * self.zeros[idx]) ** p.nu / math.gamma(p.nu + 1.0)
        return self.normalizers[idx] * lead

    def derivatives(self, x, ks=None) -> np.ndarray:
        """phi_k'(x) for x > 0 from the Bessel derivative."""
        p = self.problem
        idx = self._index(ks)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x <= 0):
            raise ValueError("derivative evaluated only for x > 0")
        xk = x ** p.k_alpha
        z = self.zeros[idx, None] * xk[None, :]
        j, dj = bessel_j_and_deriv(p.nu, z.ravel())
        j = np.asarray(j).reshape(z.shape)
        dj = np.asarray(dj).reshape(z.shape)
        a = p.power
        term = a * x ** (a - 1.0) * j + self.zeros[idx, None] * p.k_alpha * x ** (a + p.k_alpha - 1.0) * dj
        return self.normalizers[idx, None] * term

    def flux_divergence(self, x, ks=None) -> np.ndarray:
        """(x^alpha phi_k')' for x > 0, using Bessel's equation for J''."""
        p = self.problem
        idx = self._index(ks)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        al, a, kk = p.alpha, p.power, p.k_alpha
        jk = self.zeros[idx, None]
        z = jk * x[None, :] ** kk
        j, dj = bessel_j_and_deriv(p.nu, z.ravel())
        j = np.asarray(j).reshape(z.shape)
        dj = np.asarray(dj).reshape(z.shape)
        ddj = -dj / z - (1.0 - (p.nu / z) ** 2) * j
        e1 = al + a - 1.0
        e2 = al + a + kk - 1.0
        dz = jk * kk * x[None, :] ** (kk - 1.0)
        xx = x[None, :]
        val = (
            a * e1 * xx ** (e1 - 1.0) * j
            + a * xx**e1 * dj * dz
            + jk * kk * e2 * xx ** (e2 - 1.0) * dj
            + jk * kk * xx**e2 * ddj * dz
        )
        return self.normalizers[idx, None] * val

    def nodal_points(self, k: int | None = None) -> np.ndarray:
        """Interior zeros of phi_k in (0, 1), ascending."""
        k = self.count if k is None else k
        ratios = self.zeros[: k - 1] / self.zeros[k - 1]
        return ratios ** (1.0 / self.problem.k_alpha)

    def quadrature_rule(self, order: int = 20, k: int | None = None) -> QuadratureRule:
        """Graded rule on [0, 1] with breaks at the nodes of phi_k (default: highest mode).

        Grading stops once x^{k_alpha} < 1e-8, i.e. the first panel is
        [0, 1e-8] in the variable z = x^{k_alpha} that the eigenfunctions live on.
        """
        floor = 1e-8 ** (1.0 / self.problem.k_alpha)
        return QuadratureRule(graded_breakpoints(0.0, 1.0, floor, 0.25, self.nodal_points(k)), order)


def eigenvalues(problem: DegenerateProblem, count: int) -> EigenSystem:
    if int(count) != count or count < 1:
        raise ValueError("count must be a positive integer")
    table = bessel_zeros(problem.nu, int(count))
    lambdas = (problem.k_alpha * table.zeros) ** 2
    _, dj = bessel_j_and_deriv(problem.nu, table.zeros)
    dj = np.asarray(dj)
    normalizers = math.sqrt(2.0 * problem.k_alpha) / np.abs(dj)
    for arr in (lambdas, normalizers, dj):
        arr.setflags(write=False)
    return EigenSystem(problem, table, lambdas, normalizers, dj)


def eigenfunction_eval(system: EigenSystem, k: int, x):
    """phi_k(x) on [0, 1]; scalar in, scalar out."""
    if not 1 <= k <= system.count:
        raise IndexError(f"k={k} outside 1..{system.count}")
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(arr > 1):
        raise ValueError("x must lie in [0, 1]")
    vals = system.values(np.atleast_1d(arr), [k])[0]
    return float(vals[0]) if arr.ndim == 0 else vals


def gram_matrix(system: EigenSystem, quad: QuadratureRule | None = None, tol: float = 1e-12) -> np.ndarray:
    """M_jk = int_0^1 phi_j phi_k dx by refined graded quadrature."""
    rule = quad if quad is not None else system.quadrature_rule()

    def integrand(x):
        v = system.values(x)
        return v[:, None, :] * v[None, :, :]

    value, _ = integrate_refining(integrand, rule, tol)
    return value


@dataclass(frozen=True)
class GapCheck:
    min_gap: float
    bound: float
    ok: bool
    branch: str
    fixed_constant: float
    fixed_constant_ok: bool
    gaps: np.ndarray = field(repr=False)


def gap_check(system: EigenSystem) -> GapCheck:
    """Minimal gap of sqrt(lambda_k) against the Bessel-zero monotonicity bounds.

    For nu <= 1/2 the zero spacing is nondecreasing, so every gap is at least
    k_alpha (j_2 - j_1); for nu >= 1/2 it is nonincreasing toward pi, so
    every gap is at least k_alpha pi.  At nu = 1/2 both hold and the larger
    is reported.  The fixed constants 7 pi / 16 (weak) and pi / 2 (strong)
    are checked alongside.
    """
    if system.count < 2:
        raise ValueError("gap check needs at least two eigenvalues")
    p = system.problem
    gaps = np.diff(np.sqrt(system.lambdas))
    min_gap = float(gaps.min())
    spacing = system.zeros[1] - system.zeros[0]
    candidates = []
    if p.nu <= 0.5 + 1e-12:
        candidates.append(("nu<=1/2", p.k_alpha * spacing))
    if p.nu >= 0.5 - 1e-12:
        candidates.append(("nu>=1/2", p.k_alpha * math.pi))
    branch, bound = max(candidates, key=lambda c: c[1])
    # the fixed constants follow the degeneracy regime, not the nu branch
    constant = WEAK_GAP_CONSTANT if p.weak else STRONG_GAP_CONSTANT
    # the lower bound is attained by the first gap in the nu <= 1/2 branch
    ok = min_gap >= bound * (1.0 - 1e-12) and bound > 0
    return GapCheck(min_gap, bound, bool(ok), branch, constant, bool(min_gap >= constant), gaps)


@dataclass(frozen=True)
class BoundaryAsymptotics:
    fitted_exponent: float
    expected_exponent: float
    product_limit: float  # |x phi_j phi_k| at the smallest sample
    flux_limit: float  # |(x phi_j')' x^alpha phi_k| at the smallest sample
    samples: np.ndarray = field(repr=False)


def boundary_asymptotics_check(system: EigenSystem, k: int, j: int = 1) -> BoundaryAsymptotics:
    """Slope of log|phi_k| against log x on [1e-6, 1e-3] plus vanishing boundary products."""
    p = system.problem
    xs = np.logspace(-6, -3, 31)
    vals = np.abs(system.values(xs, [k])[0])
    slope = float(np.polyfit(np.log(xs), np.log(vals), 1)[0])
    expected = p.power + p.k_alpha * p.nu
    probe = np.array([1e-4, 1e-6, 1e-8])
    phi_j = system.values(probe, [j])[0]
    phi_k = system.values(probe, [k])[0]
    product = np.abs(probe * phi_j * phi_k)
    # (x phi_j')' = phi_j' + x phi_j''; with x^alpha phi_j'' = flux' - alpha x^{alpha-1} phi_j'
    dphi = system.derivatives(probe, [j])[0]
    flux = system.flux_divergence(probe, [j])[0]
    second = (flux - p.alpha * probe ** (p.alpha - 1.0) * dphi) * probe ** (-p.alpha)
    term = np.abs((dphi + probe * second) * probe**p.alpha * phi_k)
    return BoundaryAsymptotics(slope, expected, float(product[-1]), float(term[-1]), np.vstack([probe, product, term]))


def eigen_residual(system: EigenSystem, delta: float = 1e-3, points: int = 2001) -> np.ndarray:
    """max_x |(x^alpha phi_k')' + lambda_k phi_k| / lambda_k on [delta, 1 - delta], per k."""
    x = np.linspace(delta, 1.0 - delta, points)
    flux = system.flux_divergence(x)
    vals = system.values(x)
    res = np.abs(flux + system.lambdas[:, None] * vals)
    return res.max(axis=1) / system.lambdas
