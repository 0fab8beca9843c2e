"""Acceptance criteria at their stated tolerances, one PASS/FAIL line each.

Two literal criteria are known to fail and are marked strict xfail, so they
stay visible as FAIL lines and turn the suite red if they ever start passing:
3b (pi/2 gap constant at alpha = 1) and 6c (term ratio < 1/2 for every k > 5
at tau = 0.01).
"""

import math
import time

import numpy as np
import pytest
from scipy.linalg import expm

from degstab.bop import (
    build_operator,
    first_row_analytic,
    ground_entry_analytic,
    hypothesis_series,
    lower_bound_check,
    positivity_condition,
)
from degstab.dynamics import ControlSignal, TrajectoryState, simulate
from degstab.selftest import run_selftest
from degstab.spectral import (
    STRONG_GAP_CONSTANT,
    WEAK_GAP_CONSTANT,
    eigenfunction_eval,
    eigenvalues,
    gap_check,
    gram_matrix,
    make_problem,
)
from degstab.stabilize import WindowSchedule, run_stabilization

from conftest import GRID, cached_operator, cached_system

WEAK = [a for a in GRID if a < 1]
STRONG = [a for a in GRID if a >= 1]


def test_1_classical_reduction(criterion):
    t0 = time.perf_counter()
    s = eigenvalues(make_problem(0.0), 100)
    k = np.arange(1, 101)
    lam_err = float(np.max(np.abs(s.lambdas - (k * math.pi) ** 2) / (k * math.pi) ** 2))
    x = np.linspace(0, 1, 1001)
    phi_err = max(
        float(np.max(np.abs(eigenfunction_eval(s, kk, x) - math.sqrt(2) * np.sin(kk * math.pi * x)))) for kk in k
    )
    dt = time.perf_counter() - t0
    ok = lam_err <= 1e-10 and phi_err <= 1e-8 and dt < 1.0
    criterion("1 classical reduction", ok, f"lambda rel err {lam_err:.2e}, phi max err {phi_err:.2e}, {dt:.2f} s")
    assert ok


def test_2_orthonormality(criterion):
    t0 = time.perf_counter()
    devs = {a: float(np.max(np.abs(gram_matrix(cached_system(a, 32)) - np.eye(32)))) for a in GRID}
    dt = time.perf_counter() - t0
    worst = max(devs.values())
    ok = worst <= 1e-8 and dt < 30
    criterion("2 orthonormality N=32", ok, f"max Gram deviation {worst:.2e} over {len(GRID)} alphas, {dt:.2f} s")
    assert ok


def test_3a_gap_weak_branch(criterion):
    t0 = time.perf_counter()
    gaps = {a: gap_check(cached_system(a, 501)) for a in WEAK}
    dt = time.perf_counter() - t0
    worst = min(g.min_gap for g in gaps.values())
    ok = worst >= WEAK_GAP_CONSTANT and all(g.ok for g in gaps.values()) and dt < 5
    criterion("3a gap >= 7pi/16 (weak alphas, k <= 500)", ok, f"smallest min gap {worst:.6f} vs {WEAK_GAP_CONSTANT:.6f}, {dt:.2f} s")
    assert ok


def test_3_gap_structural_bound(criterion):
    gaps = {a: gap_check(cached_system(a, 501)) for a in GRID}
    ok = all(g.ok for g in gaps.values())
    detail = ", ".join(f"{a}: {g.min_gap:.4f}>={g.bound:.4f}" for a, g in gaps.items())
    criterion("3 gap >= Bessel-zero monotonicity bound (all alphas)", ok, detail)
    assert ok


@pytest.mark.xfail(strict=True, reason="k_alpha (j_{0,2} - j_{0,1}) = 1.5576 < pi/2 at alpha = 1")
def test_3b_gap_strong_constant(criterion):
    g = gap_check(cached_system(1.0, 501))
    ok = g.min_gap >= STRONG_GAP_CONSTANT
    criterion("3b gap >= pi/2 at alpha=1", ok, f"min gap {g.min_gap:.6f} vs {STRONG_GAP_CONSTANT:.6f} (structural bound {g.bound:.6f} holds)")
    assert ok


def test_4_first_row_oracle(criterion):
    devs = {}
    for a in GRID:
        op = cached_operator(a, 50)
        devs[a] = op.first_row_deviation(50)
    closed = abs(first_row_analytic(cached_system(0.0, 2), 2) - (-16 / (9 * math.pi**2)))
    quad = abs(cached_operator(0.0, 50).matrix[0, 1] - (-16 / (9 * math.pi**2)))
    worst = max(devs.values())
    ok = worst <= 1e-8 and closed <= 1e-9 and quad <= 1e-9
    criterion("4 analytic b_1k vs quadrature (k <= 50)", ok, f"max deviation {worst:.2e}; alpha=0 k=2 closed form err {max(closed, quad):.2e}")
    assert ok


def test_5_ground_entry(criterion):
    rows = []
    ok = True
    for a in GRID:
        s = cached_system(a, 2)
        b11 = ground_entry_analytic(s)
        left, right = positivity_condition(s)
        ok &= b11 > 0 and left > right
        rows.append(f"{a}: B11={b11:.4f} L={left:.3f} R={right:.3f}")
    zero = abs(ground_entry_analytic(cached_system(0.0, 2)) - (1 / 3 - 1 / (2 * math.pi**2)))
    ok &= zero <= 1e-9
    criterion("5 ground entry > 0 and left > right", ok, f"alpha=0 err {zero:.2e}; " + "; ".join(rows))
    assert ok


def test_6a_lower_bound(criterion):
    checks = {a: lower_bound_check(cached_operator(a, 200)) for a in GRID}
    ok = all(c.c_hat > 0 and c.ok for c in checks.values())
    criterion("6a min |B_1k| lambda_k^{3/2} > 0, top-half stable (k <= 200)", ok, ", ".join(f"{a}: {c.c_hat:.3f}" for a, c in checks.items()))
    assert ok


def test_6b_series_tail_converges(criterion):
    rows, ok = [], True
    for a in GRID:
        op = cached_operator(a, 200)
        for tau in (0.01, 0.1, 1.0):
            s = hypothesis_series(op, tau)
            ok &= s.converged
            rows.append(f"{a}/{tau}: {s.tail_ratio:.1e}")
    criterion("6b series tail ratios < 1/2 and decreasing", ok, "alpha/tau: tail ratio " + ", ".join(rows))
    assert ok


@pytest.mark.xfail(strict=True, reason="at tau = 0.01 the term ratio exceeds 1/2 up to k ~ 34 for alpha near 3/2")
def test_6c_series_ratio_beyond_five(criterion):
    onsets = {(a, tau): hypothesis_series(cached_operator(a, 200), tau).ratio_onset for a in GRID for tau in (0.01, 0.1, 1.0)}
    bad = {k: v for k, v in onsets.items() if v > 6}
    ok = not bad
    criterion("6c term ratio < 1/2 for every k > 5", ok, "violations (alpha, tau) -> ratio onset: " + ", ".join(f"{k}->{v}" for k, v in bad.items()))
    assert ok


def test_7_integrator(criterion):
    t0 = time.perf_counter()
    # p = 0 against the closed form
    op = cached_operator(0.5, 16)
    c0 = np.r_[1.0, 0.3, -0.2, 0.1, np.zeros(12)]
    path = simulate(TrajectoryState.from_coeffs(op.system, c0), ControlSignal.zero(), 0.5, op, record_dt=0.1)
    free_err = max(float(np.max(np.abs(s.coeffs - np.exp(-op.system.lambdas * s.t) * c0))) for s in path)
    # constant p, 2 modes, against the matrix exponential
    op2 = cached_operator(0.5, 2)
    p, T = 2.0, 1.0
    ref = expm(-(np.diag(op2.system.lambdas) + p * op2.matrix) * T) @ np.array([1.0, 0.05])
    u0 = TrajectoryState.from_coeffs(op2.system, [1.0, 0.05])
    sig = ControlSignal.constant(p, 0.0, T)
    const_err = float(np.max(np.abs(simulate(u0, sig, T, op2, dt=2e-4)[-1].coeffs - ref)))
    # measured order
    errs = [float(np.linalg.norm(simulate(u0, sig, T, op2, dt=h)[-1].coeffs - ref)) for h in (0.02, 0.01, 0.005)]
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    dt = time.perf_counter() - t0
    ok = free_err <= 1e-12 and const_err <= 1e-8 and all(abs(o - 2) <= 0.2 for o in orders) and dt < 10
    criterion("7 integrator", ok, f"p=0 err {free_err:.1e}, constant-p err {const_err:.1e}, orders {orders[0]:.3f} {orders[1]:.3f}, {dt:.2f} s")
    assert ok


def test_8_superexponential_signature(criterion):
    t0 = time.perf_counter()
    rows, ok = [], True
    for a in (0.0, 0.5, 1.2):
        op = cached_operator(a, 64)
        u0 = TrajectoryState.from_coeffs(op.system, np.r_[1.0, 0.05, np.zeros(62)])
        rep = run_stabilization(u0, WindowSchedule.growing(0.5, 4, 2, 64), op)
        ratio = rep.shifted_errors[-1] / rep.baseline_shifted[-1]
        this = rep.strictly_decreasing and rep.accelerating and rep.fit_status == "ok" and rep.r2 >= 0.95 and ratio <= 1e-2
        ok &= this
        logred = " ".join(f"{v:.1f}" for v in rep.log_reductions)
        rows.append(f"{a}: log-reductions [{logred}], r2 {rep.r2:.4f}, final/baseline {ratio:.1e}")
    dt = time.perf_counter() - t0
    ok &= dt < 120
    criterion("8 superexponential signature", ok, "; ".join(rows) + f"; {dt:.1f} s")
    assert ok


def test_9_bessel_substrate(criterion):
    t0 = time.perf_counter()
    results = run_selftest()
    dt = time.perf_counter() - t0
    failed = [r.name for r in results if not r.ok]
    ok = not failed and dt < 5
    criterion("9 Bessel substrate", ok, f"{len(results)} checks, failed {failed or 'none'}, {dt:.2f} s")
    assert ok
