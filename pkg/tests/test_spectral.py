import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from degstab.spectral import (
    ProblemDomainError,
    boundary_asymptotics_check,
    eigen_residual,
    eigenfunction_eval,
    eigenvalues,
    gap_check,
    gram_matrix,
    make_problem,
)

from conftest import GRID

# phi_3 at x = 0.001, 0.2, 0.7 and its L^2 norm, via mpmath.besselj/besseljzero and mpmath.quad
PHI3_REF = {
    0.3: [0.0839521810120377, 0.8914494342165711, 0.8727344046170497],
    1.49: [9.091188016576158, -0.31956767728097113, 0.6289428059019297],
}


@pytest.mark.parametrize(
    "alpha,regime,nu",
    [(0.0, "weak", 0.5), (0.5, "weak", 1 / 3), (1.0, "strong", 0.0), (1.2, "strong", 0.25), (4 / 3, "strong", 0.5)],
)
def test_problem_parameters(alpha, regime, nu):
    p = make_problem(alpha)
    assert p.regime == regime
    assert p.nu == pytest.approx(nu, abs=1e-15)
    assert p.k_alpha == pytest.approx(1 - alpha / 2)


@pytest.mark.parametrize("alpha", [-0.1, 1.5, 2.0, math.nan])
def test_out_of_scope(alpha):
    with pytest.raises(ProblemDomainError):
        make_problem(alpha)


def test_classical_case(system):
    s = system(0.0, 100)
    k = np.arange(1, 101)
    np.testing.assert_allclose(s.lambdas, (k * math.pi) ** 2, rtol=1e-10)
    x = np.linspace(0, 1, 1001)
    for kk in (1, 7, 50, 100):
        assert np.max(np.abs(eigenfunction_eval(s, kk, x) - math.sqrt(2) * np.sin(kk * math.pi * x))) <= 1e-8


@pytest.mark.parametrize("alpha", list(PHI3_REF))
def test_eigenfunction_against_mpmath(system, alpha):
    s = system(alpha, 4)
    got = eigenfunction_eval(s, 3, np.array([0.001, 0.2, 0.7]))
    np.testing.assert_allclose(got, PHI3_REF[alpha], rtol=1e-11)


def test_eigenfunction_eval_bounds(system):
    s = system(0.5, 4)
    assert isinstance(eigenfunction_eval(s, 1, 0.5), float)
    with pytest.raises(IndexError):
        eigenfunction_eval(s, 5, 0.5)
    with pytest.raises(ValueError):
        eigenfunction_eval(s, 1, 1.5)


@pytest.mark.parametrize("alpha", GRID)
def test_orthonormal(system, alpha):
    g = gram_matrix(system(alpha, 32))
    assert np.max(np.abs(g - np.eye(32))) <= 1e-8


@pytest.mark.parametrize("alpha", GRID)
def test_boundary_conditions(system, alpha):
    s = system(alpha, 6)
    # phi_k(1) = 0 for every alpha
    assert np.max(np.abs(s.values(np.array([1.0])))) <= 1e-12
    if alpha < 1:
        assert np.max(np.abs(s.value_at_origin())) == 0.0
    else:
        # weighted flux x^alpha phi_k' vanishes at 0
        x = np.array([1e-10])
        flux = x**alpha * s.derivatives(x)
        assert np.max(np.abs(flux)) <= 1e-3


@pytest.mark.parametrize("alpha", GRID)
def test_eigen_equation_residual(system, alpha):
    assert np.max(eigen_residual(system(alpha, 10))) <= 1e-9


@pytest.mark.parametrize("alpha", [0.3, 0.9, 1.2])
def test_boundary_asymptotics(system, alpha):
    b = boundary_asymptotics_check(system(alpha, 5), 3)
    # the next series term is a relative x^{2 k_alpha} correction, visible at x ~ 1e-3
    assert b.fitted_exponent == pytest.approx(b.expected_exponent, abs=2e-2)
    # boundary products vanish as x -> 0, for alpha near 1 only like x^{1 - alpha}
    product, flux = b.samples[1], b.samples[2]
    assert np.all(np.diff(product) < 0) and np.all(np.diff(flux) < 0)


@pytest.mark.parametrize("alpha", GRID)
def test_gap_bound_structural(system, alpha):
    g = gap_check(system(alpha, 501))
    assert g.ok
    if alpha == 0.0:
        assert g.min_gap == pytest.approx(math.pi, rel=1e-12)


def test_gap_fixed_constants(system):
    assert gap_check(system(0.5, 501)).fixed_constant_ok
    assert gap_check(system(0.9, 501)).fixed_constant_ok
    # pi/2 is out of reach on the strong side: the spacing is k_alpha * (j_2 - j_1) < pi/2
    assert gap_check(system(1.0, 501)).min_gap == pytest.approx(1.5576262762952688, rel=1e-12)
    assert not gap_check(system(1.2, 501)).fixed_constant_ok


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 1.49))
def test_eigenvalues_increase_with_gap(alpha):
    s = eigenvalues(make_problem(alpha), 40)
    assert np.all(np.diff(s.lambdas) > 0)
    assert gap_check(s).ok


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 1.49), st.integers(1, 20))
def test_zero_count_of_eigenfunction(alpha, k):
    # phi_k has exactly k - 1 sign changes in (0, 1)
    s = eigenvalues(make_problem(alpha), 20)
    x = np.linspace(1e-6, 1 - 1e-6, 20001)
    v = s.values(x, [k])[0]
    assert int(np.sum(np.sign(v[1:]) != np.sign(v[:-1]))) == k - 1
