import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.linalg import expm

from degstab.dynamics import (
    ControlSignal,
    ControlWindow,
    GroundState,
    StepSizeError,
    TrajectoryState,
    affine_response,
    error_to_ground,
    free_decay_shifted,
    free_flow,
    h_max,
    simulate,
    simulate_interaction,
    step,
)


def reference(op, c0, p, T):
    """Coefficients at T for constant p via the matrix exponential."""
    A = -(np.diag(op.system.lambdas) + p * np.asarray(op.matrix))
    return expm(A * T) @ np.asarray(c0, dtype=float)


def test_state_roundtrip(system):
    s = system(0.5, 4)
    c = np.array([0.3, -0.2, 0.1, 0.05])
    st_ = TrajectoryState.from_coeffs(s, c, t=0.7)
    np.testing.assert_allclose(st_.coeffs, c, rtol=1e-14)
    g = GroundState(s.lambdas[0], 4)
    assert error_to_ground(st_) == pytest.approx(np.linalg.norm(c - g.coeffs(0.7)), rel=1e-12)
    with pytest.raises(ValueError):
        TrajectoryState(0.0, np.zeros(3), s)
    with pytest.raises(FloatingPointError):
        TrajectoryState(0.0, np.array([0, np.nan, 0, 0]), s)


@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.2])
def test_free_flow_exact(operator, alpha):
    op = operator(alpha, 16)
    rng = np.random.default_rng(3)
    c0 = rng.normal(size=16) / np.arange(1, 17)
    u0 = TrajectoryState.from_coeffs(op.system, c0)
    path = simulate(u0, ControlSignal.zero(), 0.3, op, record_dt=0.05)
    assert len(path) == 7
    for st_ in path:
        exact = np.exp(-op.system.lambdas * st_.t) * c0
        assert np.max(np.abs(st_.coeffs - exact)) <= 1e-12


@pytest.mark.parametrize("alpha,p", [(0.0, 1.5), (1.2, -2.0)])
def test_constant_control_matches_expm_and_dop853(operator, alpha, p):
    op = operator(alpha, 2)
    c0 = [1.0, 0.05]
    T = 1.0
    u0 = TrajectoryState.from_coeffs(op.system, c0)
    got = simulate(u0, ControlSignal.constant(p, 0.0, T), T, op, dt=2e-4)[-1].coeffs
    ref = reference(op, c0, p, T)
    A = -(np.diag(op.system.lambdas) + p * np.asarray(op.matrix))
    ode = integrate.solve_ivp(lambda t, y: A @ y, (0, T), c0, method="DOP853", rtol=1e-13, atol=1e-16)
    assert np.max(np.abs(ode.y[:, -1] - ref)) <= 1e-12
    assert np.max(np.abs(got - ref)) <= 1e-8


def test_strang_order(operator):
    op = operator(0.5, 6)
    c0 = [1.0, 0.2, -0.1, 0.05, 0.0, 0.01]
    u0 = TrajectoryState.from_coeffs(op.system, c0)
    p, T = 3.0, 0.2
    ref = reference(op, c0, p, T)
    hs = [0.01, 0.005, 0.0025]
    errs = [np.linalg.norm(simulate(u0, ControlSignal.constant(p, 0.0, T), T, op, dt=h)[-1].coeffs - ref) for h in hs]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 2.0) <= 0.2)


def test_h_max_rule(operator):
    op = operator(0.5, 10)
    assert h_max(op, 0.0) == pytest.approx(min(0.05 / math.sqrt(op.system.lambdas[-1]), 0.1))
    assert h_max(op, 1e4) == pytest.approx(0.1 / (1 + 1e4))


def test_step_validation(operator):
    op = operator(0.5, 4)
    u0 = TrajectoryState.from_coeffs(op.system, [1, 0, 0, 0])
    p = ControlSignal.constant(1.0, 0.0, 1.0)
    with pytest.raises(StepSizeError):
        step(u0, p, 1.0, op)
    with pytest.raises(StepSizeError):
        step(u0, p, -1e-3, op)
    straddle = ControlSignal.constant(1.0, 0.0, 1e-3)
    with pytest.raises(StepSizeError):
        step(u0, straddle, 2e-3, op)


def test_control_window_closed_forms():
    w = ControlWindow(0.0, 0.5, [-3.0, 0.0, 2.0], [0.7, -0.2, 0.1], anchor=0.5)
    ref, _ = integrate.quad(lambda t: float(w(t)), 0.1, 0.4, epsabs=1e-15)
    assert w.integral(0.1, 0.4) == pytest.approx(ref, abs=1e-14)
    ts = np.linspace(0, 0.4999, 2001)
    assert np.max(np.abs(w(ts))) <= w.max_abs()
    assert float(w(0.5)) == 0.0  # half-open window
    d = np.array([0.0, 5.0])
    K = w.affine_kernel(d, 0.1, 0.4)
    for k, dk in enumerate(d):
        for m, r in enumerate(w.rates):
            ref, _ = integrate.quad(lambda s: math.exp(-dk * (0.4 - s) + r * (s - 0.5)), 0.1, 0.4, epsabs=1e-15)
            assert K[k, m] == pytest.approx(ref, abs=1e-14)


def test_signal_bookkeeping():
    a = ControlWindow(0.0, 1.0, [0.0], [2.0], 0.0)
    b = ControlWindow(1.0, 2.0, [0.0], [0.0], 1.0)
    s = ControlSignal((b, a))
    assert s.breakpoints() == [0.0, 1.0, 2.0]
    assert s.integral(0.5, 1.5) == pytest.approx(1.0)
    assert s.is_zero_on(1.0, 2.0) and not s.is_zero_on(0.0, 2.0)
    assert s.window_at(1.5) is b
    with pytest.raises(ValueError):
        ControlSignal((a, ControlWindow(0.5, 1.5, [0.0], [1.0], 0.5)))


def test_affine_response_matches_ode():
    w = ControlWindow(0.0, 0.5, [-4.0, 0.0], [0.3, -0.6], anchor=0.5)
    d = np.array([0.0, 7.0, 30.0])
    b = np.array([0.3, -0.2, 0.01])
    w0 = np.array([0.0, 0.05, -0.01])
    got = np.array([float(v) for v in affine_response(w0, w, d, b, 0.0, 0.5)])
    ode = integrate.solve_ivp(
        lambda t, z: -d * z - float(w(t)) * b, (0, 0.5), w0, method="DOP853", rtol=1e-13, atol=1e-16
    )
    np.testing.assert_allclose(got, ode.y[:, -1], atol=1e-12)


@pytest.mark.parametrize("alpha", [0.0, 1.2])
def test_interaction_integrator_agrees(operator, alpha):
    op = operator(alpha, 8)
    c0 = np.zeros(8)
    c0[:3] = [1.0, 0.05, -0.02]
    u0 = TrajectoryState.from_coeffs(op.system, c0)
    w = ControlWindow(0.0, 0.5, [-2.0, 0.0], [0.4, -0.3], anchor=0.5)
    p = ControlSignal((w,))
    a = simulate(u0, p, 0.5, op, dt=5e-4)[-1]
    b = simulate_interaction(u0, p, 0.5, op, dt=5e-4)[-1]
    assert np.max(np.abs(a.deviation - b.deviation)) <= 1e-8


def test_record_times_and_breakpoints(operator):
    op = operator(0.5, 4)
    u0 = TrajectoryState.from_coeffs(op.system, [1, 0.1, 0, 0])
    path = simulate(u0, ControlSignal.constant(0.5, 0.0, 0.13), 0.3, op, record_dt=0.1)
    assert [round(s.t, 12) for s in path] == [0.0, 0.1, 0.2, 0.3]
    with pytest.raises(ValueError):
        simulate(u0, ControlSignal.zero(), 0.0, op)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.5), st.floats(0.0, 0.5), st.lists(st.floats(-1, 1), min_size=6, max_size=6))
def test_free_flow_semigroup_and_decay(a, b, coeffs):
    from conftest import cached_system

    s = cached_system(0.9, 6)
    u = TrajectoryState.from_coeffs(s, coeffs)
    one = free_flow(u, a + b)
    two = free_flow(free_flow(u, a), b)
    assert np.allclose(one.deviation, two.deviation, rtol=1e-12, atol=1e-15)
    assert one.shifted_error <= u.shifted_error + 1e-15
    assert free_decay_shifted(u, a + b) == pytest.approx(one.shifted_error, rel=1e-12, abs=1e-300)
