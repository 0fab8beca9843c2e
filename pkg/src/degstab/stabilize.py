"""Windowed moment-problem controls steering u toward the ground state psi_1.

On a window [t_j, t_j + tau] with s = t - t_j, the shifted deviation w of
``dynamics`` linearised about e_1 obeys w_k' = -d_k w_k - p(s) B_k1 with
d_k = lambda_k - lambda_1, so

    w_k(tau) = e^{-d_k tau} w_k(0) - B_k1 int_0^tau e^{-d_k (tau - s)} p(s) ds.

Writing p as a combination of the same exponentials turns "w_k(tau) = 0 for
k <= n" into an n x n symmetric Gram system.  The linear solution is then
polished by chord iterations against the full bilinear flow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy import optimize

from .bop import ControlOperator, hypothesis_series
from .dynamics import (
    WORKING_DPS,
    ControlSignal,
    ControlWindow,
    TrajectoryState,
    _interaction_segment,
    free_decay_shifted,
    h_max,
    simulate_interaction,
)
from .spectral import gap_check

COND_CAP = 1e12
LINEARIZATION_LIMIT = 0.1
MAX_CORRECTIONS = 5


class WindowFailure(RuntimeError):
    def __init__(self, window: int, message: str):
        super().__init__(f"window {window}: {message}")
        self.window = window


class DecayFitError(ValueError):
    pass


@dataclass(frozen=True)
class WindowSchedule:
    window_length: float
    windows: int
    modes_per_window: tuple[int, ...]

    def __post_init__(self):
        if not self.window_length > 0:
            raise ValueError("window_length must be positive")
        n = tuple(int(m) for m in self.modes_per_window)
        if len(n) != self.windows:
            raise ValueError("need one mode count per window")
        if any(m < 1 for m in n) or any(b < a for a, b in zip(n, n[1:])):
            raise ValueError("modes_per_window must be positive and nondecreasing")
        object.__setattr__(self, "modes_per_window", n)

    @classmethod
    def growing(cls, window_length: float, windows: int, n1: int, size: int) -> "WindowSchedule":
        """n_j = min(N, n_1 + 2 (j - 1))."""
        return cls(window_length, windows, tuple(min(size, n1 + 2 * j) for j in range(windows)))

    def check(self, size: int):
        if max(self.modes_per_window) > size:
            raise ValueError(f"modes_per_window exceeds N={size}")


@dataclass(frozen=True)
class WindowResult:
    signal: ControlWindow
    modes_requested: int
    modes_used: int
    condition: float
    corrections: int
    residual: float  # max |w_k(tau)| over the controlled modes after correction


def _gram(d: np.ndarray, tau: float) -> np.ndarray:
    s = d[:, None] + d[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(s == 0.0, tau, -np.expm1(-s * tau) / np.where(s == 0.0, 1.0, s))
    return g


def window_control(
    state: TrajectoryState,
    tau: float,
    modes: int,
    op: ControlOperator,
    window: int = 1,
    corrections: int = MAX_CORRECTIONS,
    dt: float | None = None,
) -> WindowResult:
    """Control on [t, t + tau] zeroing the first ``modes`` shifted modal errors at window end.

    p(t) = sum_{m <= n} c_m exp(-d_m (t_end - t)), the minimum-L^2 solution of
    the linearised moment problem, solved in extended precision.  ``modes``
    is reduced until the Gram condition number is at most 1e12.  Chord
    corrections use the bilinear remainder from ``simulate_interaction``.
    """
    size = op.size
    if not 1 <= modes <= size:
        raise ValueError(f"modes must lie in 1..{size}")
    w0 = state.deviation
    if np.linalg.norm(w0) * op.norm * tau > LINEARIZATION_LIMIT:
        raise WindowFailure(window, f"deviation {np.linalg.norm(w0):.3g} beyond the linearisation threshold")
    lam = op.system.lambdas
    d = lam - lam[0]
    b = np.asarray(op.matrix[:, 0])
    t0, t1 = state.t, state.t + tau

    n = modes
    while True:
        cond = float(np.linalg.cond(_gram(d[:n], tau)))
        if cond <= COND_CAP or n == 1:
            break
        n -= 1
    if cond > COND_CAP:
        raise WindowFailure(window, f"Gram matrix ill-conditioned (cond={cond:.3g}) even for one mode")

    def make(c):
        return ControlWindow(t0, t1, d[:n], [float(v) for v in c], t1, precise=tuple(c))

    if not np.any(w0):
        return WindowResult(make([mpmath.mpf(0)] * n), modes, n, cond, 0, 0.0)

    with mpmath.workdps(WORKING_DPS):
        dm = [mpmath.mpf(float(x)) for x in d[:n]]
        G = mpmath.matrix(n, n)
        for k in range(n):
            for m in range(n):
                x = dm[k] + dm[m]
                G[k, m] = mpmath.mpf(tau) if x == 0 else -mpmath.expm1(-x * tau) / x
        decayed = [mpmath.exp(-dm[k] * tau) * mpmath.mpf(float(w0[k])) for k in range(n)]
        bm = [mpmath.mpf(float(v)) for v in b[:n]]

        def solve(y):
            rhs = mpmath.matrix([(decayed[k] + y[k]) / bm[k] for k in range(n)])
            return list(mpmath.lu_solve(G, rhs))

        c = solve([0] * n)
        best_c, best_res, used = c, math.inf, 0
        for it in range(corrections + 1):
            signal = make(c)
            z, y = _interaction_segment(state, signal, t1, op, dt if dt is not None else h_max(op, signal.max_abs()))
            r = [z[k] + mpmath.mpf(float(y[k])) for k in range(n)]
            res = float(max(abs(v) for v in r))
            improved = res < 0.5 * best_res
            if res < best_res:
                best_c, best_res, used = c, res, it
            if not improved or res == 0.0 or it == corrections:
                break
            c = solve([mpmath.mpf(float(v)) for v in y[:n]])
    return WindowResult(make(best_c), modes, n, cond, used, best_res)


@dataclass(frozen=True)
class StabilizationReport:
    times: np.ndarray
    errors: np.ndarray
    shifted_errors: np.ndarray
    rho_hat: float
    omega_hat: float
    M_hat: float
    r2: float
    fit_status: str
    hypothesis_summary: dict
    baseline_shifted: np.ndarray
    log_reductions: np.ndarray
    strictly_decreasing: bool
    accelerating: bool
    windows: tuple = field(repr=False, default=())
    control: ControlSignal = field(repr=False, default_factory=ControlSignal)
    trajectory: tuple = field(repr=False, default=())

    @property
    def success(self) -> bool:
        return self.strictly_decreasing and self.accelerating


def hypothesis_flags(op: ControlOperator, tau: float) -> dict:
    row = np.asarray(op.matrix[0])
    return {
        "gap_ok": gap_check(op.system).ok,
        "b_row_ok": bool(np.all(np.abs(row) > 1e-300) and op.first_row_deviation() <= 1e-8),
        "series_ok": hypothesis_series(op, tau).converged,
    }


def run_stabilization(
    u0: TrajectoryState,
    schedule: WindowSchedule,
    op: ControlOperator,
    radius: float = 0.1,
    record_dt: float | None = None,
    dt: float | None = None,
) -> StabilizationReport:
    """Alternate window_control and simulation over the schedule and fit the decay."""
    schedule.check(op.size)
    if u0.t != 0.0 and not math.isfinite(u0.t):
        raise ValueError("invalid start time")
    if u0.shifted_error > radius:
        raise ValueError(f"||u0 - phi_1|| = {u0.shifted_error:.3g} exceeds the admissible radius {radius}")
    tau = schedule.window_length
    state = u0
    times, shifted = [u0.t], [u0.shifted_error]
    samples = [u0]
    results, windows = [], []
    for j, n in enumerate(schedule.modes_per_window, start=1):
        try:
            res = window_control(state, tau, n, op, window=j, dt=dt)
        except WindowFailure:
            raise
        except Exception as exc:  # keep the window index on numerical failures
            raise WindowFailure(j, str(exc)) from exc
        sig = ControlSignal((res.signal,))
        path = simulate_interaction(state, sig, tau, op, record_dt=record_dt, dt=dt)
        samples.extend(path[1:])
        state = path[-1]
        results.append(res)
        windows.append(res.signal)
        times.append(state.t)
        shifted.append(state.shifted_error)
    times = np.array(times)
    shifted = np.array(shifted)
    errors = shifted * np.exp(-op.system.lambdas[0] * times)
    baseline = np.array([free_decay_shifted(u0, t) for t in times])
    with np.errstate(divide="ignore", invalid="ignore"):
        logred = np.log(shifted[:-1]) - np.log(shifted[1:])
    decreasing = bool(np.all(shifted[1:] < shifted[:-1]))
    accelerating = bool(decreasing and np.all(np.diff(logred) > 0))
    if not np.any(shifted):
        fit = (0.0, math.inf, 0.0, 1.0, "exact: zero error")
    else:
        try:
            M, rho, omega, r2 = fit_decay(times, shifted)
            fit = (M, rho, omega, r2, "ok")
        except DecayFitError as exc:
            fit = (math.nan, math.nan, math.nan, math.nan, f"rejected: {exc}")
    return StabilizationReport(
        times=times,
        errors=errors,
        shifted_errors=shifted,
        M_hat=fit[0],
        rho_hat=fit[1],
        omega_hat=fit[2],
        r2=fit[3],
        fit_status=fit[4],
        hypothesis_summary=hypothesis_flags(op, tau),
        baseline_shifted=baseline,
        log_reductions=logred,
        strictly_decreasing=decreasing,
        accelerating=accelerating,
        windows=tuple(results),
        control=ControlSignal(tuple(windows)),
        trajectory=tuple(samples),
    )


def admissible_radius(op: ControlOperator, schedule: WindowSchedule, radii, mode: int = 2) -> float:
    """Largest tested radius r for which u0 = phi_1 + r phi_mode stabilizes with success."""
    best = 0.0
    for r in sorted(radii):
        c = np.zeros(op.size)
        c[0], c[mode - 1] = 1.0, r
        u0 = TrajectoryState.from_coeffs(op.system, c)
        try:
            rep = run_stabilization(u0, schedule, op, radius=math.inf)
        except (WindowFailure, ValueError):
            break
        if not rep.success:
            break
        best = r
    return best


def _profile(t, logs, delta):
    y = np.log(delta + (logs.max() - logs))
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / sst if sst > 0 else 0.0
    return r2, slope, intercept


def fit_decay(times, shifted_errors, delta_max: float | None = None):
    """Fit s(t) = M exp(-rho e^{omega t}) through log(-log(s / M)) = log rho + omega t.

    ``M`` is profiled over M >= max s (1 + 1e-6), choosing the value with
    the best linear fit, then polished by least squares.  Returns
    ``(M_hat, rho_hat, omega_hat, r2)``.

    Raises ``DecayFitError`` for fewer than three positive samples,
    non-monotone or constant data, an optimum pushed to the largest
    admissible M (no doubly-exponential curvature: the data look like a
    plain exponential), or r^2 < 0.95.
    """
    t = np.asarray(times, dtype=float)
    s = np.asarray(shifted_errors, dtype=float)
    if t.shape != s.shape or t.size < 3:
        raise DecayFitError("need at least three samples")
    if np.any(~np.isfinite(s)) or np.any(s <= 0):
        raise DecayFitError("samples must be strictly positive")
    order = np.argsort(t)
    t, s = t[order], s[order]
    logs = np.log(s)
    if np.ptp(logs) == 0:
        raise DecayFitError("constant data")
    if np.any(np.diff(logs) >= 0):
        raise DecayFitError("non-monotone data")
    spread = float(np.ptp(logs))
    lo = math.log1p(1e-6)
    hi = 1e3 * spread if delta_max is None else delta_max
    res = optimize.minimize_scalar(
        lambda u: -_profile(t, logs, math.exp(u))[0],
        bounds=(math.log(lo), math.log(hi)),
        method="bounded",
        options={"xatol": 1e-10},
    )
    u = float(res.x)
    if u > math.log(hi) - 1e-3:
        raise DecayFitError("best fit at the largest admissible M: no doubly-exponential curvature")
    r2, omega, log_rho = _profile(t, logs, math.exp(u))
    # polish (log M, log rho, omega) on the linearised residuals
    top = logs.max()

    def resid(x):
        return np.log(np.maximum(x[0] - logs, 1e-300)) - (x[1] + x[2] * t)

    sol = optimize.least_squares(
        resid,
        [top + math.exp(u), log_rho, omega],
        bounds=([top + lo, -np.inf, -np.inf], [np.inf, np.inf, np.inf]),
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
    )
    r2_pol, omega_p, log_rho_p = _profile(t, logs, sol.x[0] - top)
    if r2_pol >= r2:
        r2, omega, log_rho, logM = r2_pol, omega_p, log_rho_p, sol.x[0]
    else:
        logM = top + math.exp(u)
    if r2 < 0.95:
        raise DecayFitError(f"poor doubly-exponential fit (r2={r2:.3f})")
    return math.exp(logM), math.exp(log_rho), float(omega), float(r2)
