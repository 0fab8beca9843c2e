"""The bilinear control operator: multiplication by mu(x) = x^{2 - alpha} in the eigenbasis."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .bessel import lommel_weighted_integral
from .quadrature import QuadratureRule, integrate_refining
from .spectral import EigenSystem


class HypothesisViolation(ValueError):
    """A quantity required to be nonzero vanished numerically."""


@dataclass(frozen=True)
class ControlOperator:
    system: EigenSystem = field(repr=False)
    matrix: np.ndarray = field(repr=False)
    analytic_first_row: np.ndarray = field(repr=False)

    @property
    def mu_exponent(self) -> float:
        return 2.0 - self.system.problem.alpha

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def spectral_decomposition(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues and orthonormal eigenvectors of the symmetric truncated matrix."""
        return np.linalg.eigh(self.matrix)

    @property
    def norm(self) -> float:
        return float(np.max(np.abs(self.spectral_decomposition[0])))

    def symmetry_deviation(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.T)))

    def first_row_deviation(self, kmax: int | None = None) -> float:
        kmax = self.size if kmax is None else min(kmax, self.size)
        return float(np.max(np.abs(self.matrix[0, :kmax] - self.analytic_first_row[:kmax])))


def _mu(system: EigenSystem, x):
    return np.asarray(x) ** (2.0 - system.problem.alpha)


def build_operator(system: EigenSystem, tol: float = 1e-12, quad: QuadratureRule | None = None) -> ControlOperator:
    """Assemble B_jk = <mu phi_j, phi_k> by graded quadrature and the analytic first row."""
    if system.count >= 2:
        lam = system.lambdas
        if lam[1] - lam[0] <= 0.5:
            raise HypothesisViolation(f"lambda_2 - lambda_1 = {lam[1] - lam[0]:.3g} too small")
    rule = quad if quad is not None else system.quadrature_rule()

    def integrand(x):
        v = system.values(x)
        w = v * _mu(system, x)[None, :]
        return w[:, None, :] * v[None, :, :]

    if system.count <= 96:
        mat, _ = integrate_refining(integrand, rule, tol)
    else:
        mat = _assemble_blocked(system, rule, tol)
    mat = 0.5 * (mat + mat.T)
    row = np.empty(system.count)
    row[0] = ground_entry_analytic(system)
    if system.count > 1:
        row[1:] = first_row_analytic(system, np.arange(2, system.count + 1))
    mat.setflags(write=False)
    row.setflags(write=False)
    return ControlOperator(system, mat, row)


def _assemble_blocked(system: EigenSystem, rule: QuadratureRule, tol: float) -> np.ndarray:
    # memory-light variant for large N: matrix products on node values
    prev = None
    for _ in range(7):
        rule = rule.refined() if prev is not None else rule
        v = system.values(rule.nodes)
        w = v * (_mu(system, rule.nodes) * rule.weights)[None, :]
        cur = w @ v.T
        if prev is not None and np.max(np.abs(cur - prev)) <= tol:
            return cur
        prev = cur
    raise RuntimeError("operator assembly did not converge")


def entry_quadrature(system: EigenSystem, j: int, k: int, tol: float = 1e-11) -> float:
    """<mu phi_j, phi_k> by graded quadrature to absolute tolerance ``tol``."""
    for i in (j, k):
        if not 1 <= i <= system.count:
            raise IndexError(f"index {i} outside 1..{system.count}")
    rule = system.quadrature_rule(k=max(j, k, 2))

    def integrand(x):
        v = system.values(x, [j, k])
        return _mu(system, x) * v[0] * v[1]

    value, _ = integrate_refining(integrand, rule, tol)
    return float(value)


def first_row_analytic(system: EigenSystem, k):
    """b_1k from the boundary form: 2(2-alpha)/(lambda_k - lambda_1)^2 * phi_1'(1) phi_k'(1).

    phi_1'(1) phi_k'(1) = 2 k_alpha^3 j_1 j_k sgn(J'(j_1) J'(j_k)) because the
    normaliser magnitudes cancel against |J'|.
    """
    ks = np.atleast_1d(np.asarray(k, dtype=int))
    if np.any(ks < 2) or np.any(ks > system.count):
        raise IndexError("first_row_analytic covers 2 <= k <= count; use ground_entry_analytic for k = 1")
    p = system.problem
    lam = system.lambdas
    z = system.zeros
    dj = system.deriv_at_zero
    boundary = 2.0 * p.k_alpha**3 * z[0] * z[ks - 1] * np.sign(dj[0] * dj[ks - 1])
    out = 2.0 * (2.0 - p.alpha) / (lam[ks - 1] - lam[0]) ** 2 * boundary
    return float(out[0]) if np.ndim(k) == 0 else out


def ground_entry_analytic(system: EigenSystem) -> float:
    """B_11 from the t^3 J^2 reduction and Lommel's integral.

    With z = j_1 x^{k_alpha}, <mu phi_1, phi_1> = 2 / (j_1^4 J'(j_1)^2) int_0^{j_1} z^3 J_nu(z)^2 dz,
    and 3 int_0^c z^3 J^2 = 2(nu^2 - 1) int_0^c z J^2 + c^2/2 [(c J' - J)^2 + (c^2 - nu^2 + 1) J^2].
    """
    p = system.problem
    nu = p.nu
    c = float(system.zeros[0])
    dj = float(system.deriv_at_zero[0])
    jc = 0.0  # J_nu vanishes at its zero
    i1 = lommel_weighted_integral(nu, c)
    i3 = (2.0 * (nu * nu - 1.0) * i1 + 0.5 * c * c * ((c * dj - jc) ** 2 + (c * c - nu * nu + 1.0) * jc * jc)) / 3.0
    return 2.0 * i3 / (c**4 * dj * dj)


def positivity_condition(system: EigenSystem) -> tuple[float, float]:
    """Both sides of j^5/24 > (1/2)(j^2 (nu^2 - 1)/3 + j^5/12) for j = j_{nu,1}."""
    nu = system.problem.nu
    j = float(system.zeros[0])
    left = j**5 / 24.0
    right = 0.5 * (j * j * (nu * nu - 1.0) / 3.0 + j**5 / 12.0)
    return left, right


@dataclass(frozen=True)
class LowerBoundCheck:
    c_hat: float
    ok: bool
    scaled: np.ndarray = field(repr=False)  # |B_1k| lambda_k^{3/2}, k = 2..N


def lower_bound_check(op: ControlOperator) -> LowerBoundCheck:
    """Infimum of |B_1k| lambda_k^{3/2} over 2 <= k <= N and its stability on the upper half."""
    if op.size < 3:
        raise ValueError("lower bound check needs N >= 3")
    lam = op.system.lambdas
    scaled = np.abs(op.matrix[0, 1:]) * lam[1:] ** 1.5
    c_hat = float(scaled.min())
    top = scaled[len(scaled) // 2 :]
    ok = c_hat > 0 and bool(np.all(top >= 0.5 * c_hat))
    return LowerBoundCheck(c_hat, ok, scaled)


@dataclass(frozen=True)
class SeriesCheck:
    partial_sums: np.ndarray = field(repr=False)
    log_terms: np.ndarray = field(repr=False)
    converged: bool
    tail_ratio: float  # largest term ratio over the tail window
    ratio_onset: int  # smallest K with term_{k+1}/term_k < 1/2 for every k >= K (N if never)


def hypothesis_series(op: ControlOperator, tau: float, tail: int = 5) -> SeriesCheck:
    """Partial sums of sum_k exp(-2 lambda_k tau) / |B_1k|^2.

    Terms are handled in log space; ``converged`` requires the last ``tail``
    term ratios to be below 1/2 and nonincreasing.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    row = np.abs(op.matrix[0])
    if np.any(row < 1e-300):
        k = int(np.argmax(row < 1e-300)) + 1
        raise HypothesisViolation(f"|<mu phi_1, phi_{k}>| vanishes numerically")
    log_terms = -2.0 * op.system.lambdas * tau - 2.0 * np.log(row)
    partial = np.cumsum(np.exp(log_terms))
    log_ratio = np.diff(log_terms)[-tail:]
    converged = bool(np.all(log_ratio < math.log(0.5)) and np.all(np.diff(log_ratio) <= 1e-12))
    big = np.nonzero(np.diff(log_terms) >= math.log(0.5))[0]
    onset = int(big[-1]) + 2 if big.size else 1
    return SeriesCheck(partial, log_terms, converged, float(np.exp(log_ratio.max())), onset)


def integration_by_parts_consistency(system: EigenSystem, k: int, tol: float = 1e-12) -> float:
    """Max pairwise deviation between three evaluations of <mu phi_1, phi_k>.

    Routes: direct quadrature; -2(2-alpha)/(lambda_k - lambda_1) int x phi_1' phi_k dx;
    the closed boundary form.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    p = system.problem
    direct = entry_quadrature(system, 1, k, tol)
    rule = system.quadrature_rule(k=k)

    def integrand(x):
        return x * system.derivatives(x, [1])[0] * system.values(x, [k])[0]

    inner, _ = integrate_refining(integrand, rule, tol)
    lam = system.lambdas
    middle = -2.0 * (2.0 - p.alpha) / (lam[k - 1] - lam[0]) * float(inner)
    boundary = first_row_analytic(system, k)
    vals = [direct, middle, boundary]
    return max(abs(a - b) for a in vals for b in vals)
