"""Galerkin dynamics u' = -Lambda u - p(t) B u in eigen-coefficients.

States are stored through the shifted deviation w = e^{lambda_1 t} u - e_1
from the ground state.  Distances to psi_1 are then available to full
relative precision long after e^{-lambda_1 t} u has become a cancellation
problem, and w obeys

    w' = -(Lambda - lambda_1) w - p B (e_1 + w).

Two integrators are offered.  ``strang`` splits the diagonal flow from the
exact B flow.  ``interaction`` writes w = z + y where z solves the affine
part z' = -D z - p B e_1 in closed form (Duhamel, extended precision) and
only the remainder y' = -D y - p B (z + y), second order in the control,
is Strang-split.  The latter keeps cancellation errors relative to the
controlled mode amplitudes rather than to the size of the forcing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .bop import ControlOperator
from .spectral import EigenSystem


WORKING_DPS = 60


class StepSizeError(ValueError):
    pass


def _phi(x: np.ndarray, h: float) -> np.ndarray:
    """(1 - e^{-x h}) / x with the x = 0 limit h."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x == 0.0, h, -np.expm1(-x * h) / np.where(x == 0.0, 1.0, x))


@dataclass(frozen=True)
class GroundState:
    lambda1: float
    size: int

    @property
    def direction(self) -> np.ndarray:
        e = np.zeros(self.size)
        e[0] = 1.0
        return e

    def coeffs(self, t: float) -> np.ndarray:
        return math.exp(-self.lambda1 * t) * self.direction


@dataclass(frozen=True)
class TrajectoryState:
    """u(t) = e^{-lambda_1 t} (e_1 + deviation) in the first N eigenfunctions."""

    t: float
    deviation: np.ndarray
    system: EigenSystem = field(repr=False, compare=False)

    def __post_init__(self):
        w = np.array(self.deviation, dtype=float)
        if w.ndim != 1 or w.size != self.system.count:
            raise ValueError(f"state needs {self.system.count} coefficients, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise FloatingPointError("non-finite state coefficients")
        w.setflags(write=False)
        object.__setattr__(self, "deviation", w)

    @classmethod
    def from_coeffs(cls, system: EigenSystem, coeffs, t: float = 0.0) -> "TrajectoryState":
        c = np.asarray(coeffs, dtype=float)
        w = math.exp(system.lambdas[0] * t) * c
        w[0] -= 1.0
        return cls(t, w, system)

    @property
    def coeffs(self) -> np.ndarray:
        c = self.deviation.copy()
        c[0] += 1.0
        return math.exp(-self.system.lambdas[0] * self.t) * c

    @property
    def shifted_error(self) -> float:
        """e^{lambda_1 t} ||u(t) - psi_1(t)||."""
        return float(np.linalg.norm(self.deviation))

    @property
    def size(self) -> int:
        return self.deviation.size


def error_to_ground(state: TrajectoryState) -> float:
    """||u(t) - psi_1(t)|| in L^2(0, 1), via Parseval."""
    return math.exp(-state.system.lambdas[0] * state.t) * state.shifted_error


def free_flow(state: TrajectoryState, dt: float) -> TrajectoryState:
    """Exact flow of p = 0 over ``dt``."""
    if dt < 0:
        raise StepSizeError("dt must be nonnegative")
    d = state.system.lambdas - state.system.lambdas[0]
    return TrajectoryState(state.t + dt, np.exp(-d * dt) * state.deviation, state.system)


@dataclass(frozen=True)
class ControlWindow:
    """p(t) = sum_m c_m exp(r_m (t - anchor)) for start <= t < end."""

    start: float
    end: float
    rates: np.ndarray
    coefficients: np.ndarray
    anchor: float
    precise: tuple | None = field(default=None, repr=False, compare=False)  # mpf coefficients

    def __post_init__(self):
        r = np.atleast_1d(np.asarray(self.rates, dtype=float)).copy()
        c = np.atleast_1d(np.asarray(self.coefficients, dtype=float)).copy()
        if r.shape != c.shape:
            raise ValueError("rates and coefficients must have equal length")
        if not self.end > self.start:
            raise ValueError("empty control window")
        r.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "rates", r)
        object.__setattr__(self, "coefficients", c)
        if self.precise is not None and len(self.precise) != c.size:
            raise ValueError("precise coefficients must match coefficients")

    def precise_coefficients(self) -> tuple:
        if self.precise is not None:
            return tuple(self.precise)
        return tuple(mpmath.mpf(float(v)) for v in self.coefficients)

    def affine_kernel(self, d: np.ndarray, t_from: float, t_to: float) -> np.ndarray:
        """K_km = int_{t_from}^{t_to} e^{-d_k (t_to - s)} e^{r_m (s - anchor)} ds, shape (len(d), M)."""
        x = d[:, None] + self.rates[None, :]
        return np.exp(self.rates * (t_to - self.anchor))[None, :] * _phi(x, t_to - t_from)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        vals = np.exp(np.multiply.outer(t - self.anchor, self.rates)) @ self.coefficients
        return np.where((t >= self.start) & (t < self.end), vals, 0.0)

    def integral(self, a: float, b: float) -> float:
        """int_a^b p dt for start <= a <= b <= end, in closed form."""
        r = self.rates
        h = b - a
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(r == 0.0, h, np.expm1(r * h) / np.where(r == 0.0, 1.0, r))
        return float(np.sum(self.coefficients * np.exp(r * (a - self.anchor)) * frac))

    def max_abs(self) -> float:
        """Upper bound for |p| on the window (each exponential peaks at an endpoint)."""
        ends = np.maximum(np.exp(self.rates * (self.start - self.anchor)), np.exp(self.rates * (self.end - self.anchor)))
        return float(np.sum(np.abs(self.coefficients) * ends))


@dataclass(frozen=True)
class ControlSignal:
    """Piecewise-exponential p(t); zero outside the listed windows."""

    windows: tuple[ControlWindow, ...] = ()

    def __post_init__(self):
        ws = tuple(sorted(self.windows, key=lambda w: w.start))
        for a, b in zip(ws, ws[1:]):
            if b.start < a.end:
                raise ValueError("control windows overlap")
        object.__setattr__(self, "windows", ws)

    @classmethod
    def zero(cls) -> "ControlSignal":
        return cls(())

    @classmethod
    def constant(cls, value: float, start: float, end: float) -> "ControlSignal":
        return cls((ControlWindow(start, end, [0.0], [value], start),))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for w in self.windows:
            out = out + w(t)
        return out

    def window_at(self, t: float) -> ControlWindow | None:
        for w in self.windows:
            if w.start <= t < w.end:
                return w
        return None

    def breakpoints(self) -> list[float]:
        return sorted({x for w in self.windows for x in (w.start, w.end)})

    def integral(self, a: float, b: float) -> float:
        total = 0.0
        for w in self.windows:
            lo, hi = max(a, w.start), min(b, w.end)
            if hi > lo:
                total += w.integral(lo, hi)
        return total

    def max_abs(self, a: float, b: float) -> float:
        m = 0.0
        for w in self.windows:
            if min(b, w.end) > max(a, w.start):
                m = max(m, w.max_abs())
        return m

    def is_zero_on(self, a: float, b: float) -> bool:
        return all(
            not np.any(w.coefficients) or min(b, w.end) <= max(a, w.start) for w in self.windows
        )


def h_max(op: ControlOperator, p_bound: float) -> float:
    """min(0.05 / sqrt(lambda_N), 0.1 / (1 + max|p|))."""
    return min(0.05 / math.sqrt(op.system.lambdas[-1]), 0.1 / (1.0 + p_bound))


def _b_flow(op: ControlOperator, q: float, w: np.ndarray) -> np.ndarray:
    # exact flow of v' = -p B v for v = e_1 + w, written for w
    beta, V = op.spectral_decomposition
    g = np.expm1(-q * beta)
    return V @ (g * V[0]) + w + V @ (g * (V.T @ w))


def step(state: TrajectoryState, p: ControlSignal, dt: float, op: ControlOperator, check: bool = True) -> TrajectoryState:
    """One Strang step: half diagonal flow, exact B flow with q = int p, half diagonal flow."""
    if dt <= 0:
        raise StepSizeError("dt must be positive")
    if op.size != state.size:
        raise ValueError("state and operator dimensions differ")
    t0, t1 = state.t, state.t + dt
    if check:
        limit = h_max(op, p.max_abs(t0, t1))
        if dt > limit * (1.0 + 1e-12):
            raise StepSizeError(f"dt={dt:.3g} exceeds h_max={limit:.3g}")
        for b in p.breakpoints():
            if t0 < b < t1 and not math.isclose(b, t1, rel_tol=0.0, abs_tol=1e-14 * max(1.0, abs(t1))):
                raise StepSizeError(f"step [{t0}, {t1}] straddles a control breakpoint at {b}")
    d = op.system.lambdas - op.system.lambdas[0]
    half = np.exp(-0.5 * dt * d)
    w = half * state.deviation
    q = p.integral(t0, t1)
    if q != 0.0:
        w = _b_flow(op, q, w)
    return TrajectoryState(t1, half * w, state.system)


def _record_times(t0: float, T: float, record_dt: float | None) -> list[float]:
    t_end = t0 + T
    if record_dt is None:
        return [t_end]
    if record_dt <= 0:
        raise ValueError("record_dt must be positive")
    n = int(math.floor(T / record_dt * (1.0 + 1e-12)))
    records = [t0 + i * record_dt for i in range(1, n + 1)]
    if not records or t_end - records[-1] > 1e-12 * max(1.0, T):
        records.append(t_end)
    else:
        records[-1] = t_end
    return records


def simulate(
    u0: TrajectoryState,
    p: ControlSignal,
    T: float,
    op: ControlOperator,
    record_dt: float | None = None,
    dt: float | None = None,
) -> list[TrajectoryState]:
    """Integrate over [u0.t, u0.t + T], sampling every ``record_dt`` (default: endpoints only).

    Steps follow the h_max rule per control window unless ``dt`` overrides
    it; steps never straddle a record time or a control breakpoint.  Spans
    where p vanishes are advanced by the exact free flow.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    t0, t_end = u0.t, u0.t + T
    records = _record_times(t0, T, record_dt)
    cuts = sorted({*records, *(b for b in p.breakpoints() if t0 < b < t_end)})
    out = [u0]
    state = u0
    rec = set(records)
    for b in cuts:
        span = b - state.t
        if span <= 0:
            continue
        if p.is_zero_on(state.t, b):
            state = free_flow(state, span)
        else:
            h = dt if dt is not None else h_max(op, p.max_abs(state.t, b))
            n = max(1, math.ceil(span / h - 1e-9))
            base = state.t
            for i in range(1, n + 1):
                target = base + span * i / n
                state = step(state, p, target - state.t, op, check=dt is None)
            state = TrajectoryState(b, state.deviation, state.system)
        if b in rec:
            out.append(state)
    return out


def affine_response(w0, window: ControlWindow, d, b, t_from: float, t_to: float) -> list:
    """z(t_to) for z' = -D z - p(t) b, z(t_from) = w0, exactly, as mpf values."""
    with mpmath.workdps(WORKING_DPS):
        h = mpmath.mpf(t_to) - mpmath.mpf(t_from)
        coef = window.precise_coefficients()
        rates = [mpmath.mpf(float(r)) for r in window.rates]
        grow = [mpmath.exp(r * (mpmath.mpf(t_to) - mpmath.mpf(window.anchor))) for r in rates]
        out = []
        for dk, wk, bk in zip(d, w0, b):
            dk = mpmath.mpf(float(dk))
            acc = mpmath.mpf(0)
            for c, r, g in zip(coef, rates, grow):
                x = dk + r
                acc += c * g * (h if x == 0 else -mpmath.expm1(-x * h) / x)
            out.append(mpmath.exp(-dk * h) * mpmath.mpf(float(wk)) - mpmath.mpf(float(bk)) * acc)
        return out


def _interaction_segment(state: TrajectoryState, window: ControlWindow, t_to: float, op: ControlOperator, h: float):
    """Advance across [state.t, t_to] inside one control window; returns (w as mpf list, y)."""
    d = op.system.lambdas - op.system.lambdas[0]
    b = np.asarray(op.matrix[:, 0])
    beta, V = op.spectral_decomposition
    t_a = state.t
    w_a = state.deviation
    coef = window.coefficients
    span = t_to - t_a
    n = max(1, math.ceil(span / h - 1e-9))
    y = np.zeros_like(w_a)
    half_steps = None
    for i in range(n):
        t0 = t_a + span * i / n
        t1 = t_a + span * (i + 1) / n
        dt = t1 - t0
        if half_steps is None or not math.isclose(dt, half_steps[0], rel_tol=1e-14):
            half_steps = (dt, np.exp(-0.5 * dt * d))
        half = half_steps[1]
        tm = 0.5 * (t0 + t1)
        z_mid = np.exp(-d * (tm - t_a)) * w_a - b * (window.affine_kernel(d, t_a, tm) @ coef)
        y = half * y
        q = window.integral(t0, t1)
        if q != 0.0:
            g = np.expm1(-q * beta)
            y = y + V @ (g * (V.T @ (y + z_mid)))
        y = half * y
    z = affine_response(w_a, window, d, b, t_a, t_to)
    return z, y


def _combine(z: list, y: np.ndarray) -> np.ndarray:
    with mpmath.workdps(WORKING_DPS):
        return np.array([float(zk + mpmath.mpf(float(yk))) for zk, yk in zip(z, y)])


def simulate_interaction(
    u0: TrajectoryState,
    p: ControlSignal,
    T: float,
    op: ControlOperator,
    record_dt: float | None = None,
    dt: float | None = None,
) -> list[TrajectoryState]:
    """As ``simulate`` but with the affine part of each window solved exactly.

    The decomposition restarts at every record time and control breakpoint.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    t0, t_end = u0.t, u0.t + T
    records = _record_times(t0, T, record_dt)
    cuts = sorted({*records, *(b for b in p.breakpoints() if t0 < b < t_end)})
    rec = set(records)
    out = [u0]
    state = u0
    for b in cuts:
        if b <= state.t:
            continue
        window = p.window_at(state.t)
        if window is None or not np.any(window.coefficients) or p.is_zero_on(state.t, b):
            state = free_flow(state, b - state.t)
        else:
            h = dt if dt is not None else h_max(op, window.max_abs())
            z, y = _interaction_segment(state, window, b, op, h)
            state = TrajectoryState(b, _combine(z, y), state.system)
        state = TrajectoryState(b, state.deviation, state.system)
        if b in rec:
            out.append(state)
    return out


def free_decay_shifted(state: TrajectoryState, t: float) -> float:
    """Shifted error at time ``t`` under p = 0, in closed form."""
    return free_flow(state, t - state.t).shifted_error
