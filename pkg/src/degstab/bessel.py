"""Bessel functions of the first kind for real order, with zeros and weighted integrals.

Three evaluation regimes are stitched together:

* ascending power series for ``x <= SERIES_MAX``,
* Miller backward recurrence in the order, normalised with the Neumann sum
  ``(x/2)**nu = sum_m (nu + 2m) Gamma(nu + m) / m! J_{nu+2m}(x)``, for the
  intermediate range,
* Hankel large-argument asymptotics for ``x >= HANKEL_MIN``.

All public functions accept scalars or numpy arrays for ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SERIES_MAX = 4.0
HANKEL_MIN = 25.0
NU_MAX = 5.0  # supported order range is [0, 4]; +1 shifts are used internally



class BesselDomainError(ValueError):
    """Raised for arguments outside the supported domain."""


class ZeroConvergenceError(RuntimeError):
    """Raised when a zero cannot be located; carries the failing index."""

    def __init__(self, index: int, nu: float, message: str):
        super().__init__(f"zero #{index} of order nu={nu}: {message}")
        self.index = index
        self.nu = nu


def _check_order(nu: float, upper: float = NU_MAX) -> float:
    nu = float(nu)
    if not math.isfinite(nu) or nu < 0.0:
        raise BesselDomainError(f"order must be finite and >= 0, got {nu}")
    if nu > upper:
        raise BesselDomainError(f"order {nu} outside supported range [0, {upper}]")
    return nu


def _series(nu: float, x: np.ndarray) -> np.ndarray:
    half = 0.5 * x
    term = np.where(half > 0, np.exp(nu * np.log(np.where(half > 0, half, 1.0))), 1.0 if nu == 0 else 0.0)
    term = term / math.gamma(nu + 1.0)
    total = term.copy()
    q = half * half
    for m in range(1, 80):
        term = -term * q / (m * (m + nu))
        total += term
        if np.all(np.abs(term) <= 1e-17 * np.maximum(np.abs(total), 1e-300)):
            break
    return total


def _miller(nu: float, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (J_nu(x), J_{nu+1}(x)) by backward recurrence; requires x > 0."""
    xmax = float(np.max(x))
    top = int(xmax + 12.0 * xmax ** (1.0 / 3.0) + 40.0)
    top += top % 2  # even so the normalisation sum picks even offsets cleanly
    f_next = np.zeros_like(x)
    f_cur = np.full_like(x, 1e-30)
    norm = np.zeros_like(x)
    lg_nu = math.lgamma(nu + 1.0)
    f1 = None
    for k in range(top, 0, -1):
        # f_cur ~ J_{nu+k}; step to J_{nu+k-1}
        if k % 2 == 0:
            m = k // 2
            coeff = (nu + 2 * m) * math.exp(math.lgamma(nu + m) - math.lgamma(m + 1.0))
            norm += coeff * f_cur
        f_prev = (2.0 * (nu + k) / x) * f_cur - f_next
        f_next, f_cur = f_cur, f_prev
        big = np.abs(f_cur) > 1e250
        if np.any(big):
            scale = np.where(big, 1e-250, 1.0)
            f_cur *= scale
            f_next *= scale
            norm *= scale
        if k == 1:
            f1 = f_next
    norm += math.exp(lg_nu) * f_cur
    factor = np.exp(nu * np.log(0.5 * x)) / norm
    return f_cur * factor, f1 * factor


def _hankel(nu: float, x: np.ndarray) -> np.ndarray:
    mu = 4.0 * nu * nu
    p = np.ones_like(x)
    q = np.zeros_like(x)
    term = np.ones_like(x)
    active = np.ones(x.shape, dtype=bool)
    prev_mag = np.full_like(x, np.inf)
    for k in range(1, 120):
        term = term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        mag = np.abs(term)
        active &= mag < prev_mag
        contrib = np.where(active, term, 0.0)
        # terms alternate in sign pairwise: k=1 -> Q, k=2 -> -P, k=3 -> -Q, k=4 -> P ...
        if k % 2 == 1:
            q += contrib if (k // 2) % 2 == 0 else -contrib
        else:
            p += -contrib if (k // 2) % 2 == 1 else contrib
        prev_mag = np.where(active, mag, prev_mag)
        active &= mag > 1e-17
        if not np.any(active):
            break
    phase = (0.5 * nu + 0.25) * math.pi
    c, s = np.cos(x), np.sin(x)
    cos_w = c * math.cos(phase) + s * math.sin(phase)
    sin_w = s * math.cos(phase) - c * math.sin(phase)
    return np.sqrt(2.0 / (math.pi * x)) * (p * cos_w - q * sin_w)


def _jv_pair(nu: float, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """J_nu and J_{nu+1} on a float array of nonnegative arguments."""
    j0 = np.empty_like(x)
    j1 = np.empty_like(x)
    small = x <= SERIES_MAX
    large = x >= HANKEL_MIN
    mid = ~(small | large)
    if np.any(small):
        j0[small] = _series(nu, x[small])
        j1[small] = _series(nu + 1.0, x[small])
    if np.any(large):
        j0[large] = _hankel(nu, x[large])
        j1[large] = _hankel(nu + 1.0, x[large])
    if np.any(mid):
        a, b = _miller(nu, x[mid])
        j0[mid] = a
        j1[mid] = b
    return j0, j1


def _as_array(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    return np.atleast_1d(arr).astype(float, copy=True), arr.ndim == 0


def _unwrap(values: np.ndarray, scalar: bool):
    return float(values[0]) if scalar else values


def bessel_j(nu: float, x):
    """J_nu(x) for nu in [0, 5] and x >= 0."""
    nu = _check_order(nu)
    arr, scalar = _as_array(x)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise BesselDomainError("argument must be finite and >= 0")
    j0, _ = _jv_pair(nu, arr)
    return _unwrap(j0, scalar)


def bessel_j_pair(nu: float, x):
    """(J_nu(x), J_{nu+1}(x)); cheaper than two separate calls."""
    nu = _check_order(nu)
    arr, scalar = _as_array(x)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise BesselDomainError("argument must be finite and >= 0")
    j0, j1 = _jv_pair(nu, arr)
    return _unwrap(j0, scalar), _unwrap(j1, scalar)


def bessel_j_lower(nu: float, x):
    """J_{nu-1}(x) for nu in [0, 5], x > 0.

    Orders in [-1, 0) are reached by one downward recurrence step,
    J_{nu-1} = (2 nu / x) J_nu - J_{nu+1}, which avoids Y_nu entirely.
    """
    nu = _check_order(nu)
    arr, scalar = _as_array(x)
    if np.any(arr <= 0):
        raise BesselDomainError("argument must be > 0 for J_{nu-1}")
    if nu >= 1.0:
        return _unwrap(_jv_pair(nu - 1.0, arr)[0], scalar)
    j0, j1 = _jv_pair(nu, arr)
    return _unwrap((2.0 * nu / arr) * j0 - j1, scalar)


def bessel_j_deriv(nu: float, x):
    """J'_nu(x) for x > 0."""
    nu = _check_order(nu, NU_MAX - 1.0)
    arr, scalar = _as_array(x)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise BesselDomainError("derivative needs x > 0")
    if nu >= 1.0:
        lower = _jv_pair(nu - 1.0, arr)[0]
        upper = _jv_pair(nu + 1.0, arr)[0]
        return _unwrap(0.5 * (lower - upper), scalar)
    j0, j1 = _jv_pair(nu, arr)
    # J_{nu-1} - (nu/x) J_nu with J_{nu-1} from one downward step
    return _unwrap((nu / arr) * j0 - j1, scalar)


def bessel_j_and_deriv(nu: float, x):
    """(J_nu(x), J'_nu(x)) sharing one evaluation; x > 0."""
    nu = _check_order(nu, NU_MAX - 1.0)
    arr, scalar = _as_array(x)
    if np.any(arr <= 0):
        raise BesselDomainError("derivative needs x > 0")
    j0, j1 = _jv_pair(nu, arr)
    return _unwrap(j0, scalar), _unwrap((nu / arr) * j0 - j1, scalar)


# --------------------------------------------------------------------------
# zeros


@dataclass(frozen=True)
class ZeroTable:
    """First zeros of J_nu and of J'_nu (DLMF convention: j'_{0,1} = 0)."""

    nu: float
    zeros: np.ndarray = field(repr=False)
    derivative_zeros: np.ndarray = field(repr=False)

    def __post_init__(self):
        for arr in (self.zeros, self.derivative_zeros):
            arr.setflags(write=False)

    @property
    def count(self) -> int:
        return len(self.zeros)

    def differences(self) -> np.ndarray:
        return np.diff(self.zeros)


def _mcmahon(nu: float, k: np.ndarray) -> np.ndarray:
    beta = (k + 0.5 * nu - 0.25) * math.pi
    mu = 4.0 * nu * nu
    b8 = 8.0 * beta
    return beta - (mu - 1.0) / b8 - 4.0 * (mu - 1.0) * (7.0 * mu - 31.0) / (3.0 * b8**3)


def _refine(f_and_df, lo, hi, guess, nu, first_index, xtol=4e-16, maxiter=200):
    """Vectorised safeguarded Newton on brackets [lo, hi] with a sign change."""
    lo = lo.copy()
    hi = hi.copy()
    flo, _ = f_and_df(lo)
    fhi, _ = f_and_df(hi)
    bad = np.sign(flo) * np.sign(fhi) > 0
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise ZeroConvergenceError(first_index + idx, nu, f"no sign change in bracket [{lo[idx]:.6g}, {hi[idx]:.6g}]")
    x = np.clip(guess, lo, hi)
    done = np.zeros(x.shape, dtype=bool)
    for _ in range(maxiter):
        fx, dfx = f_and_df(x)
        same_lo = np.sign(fx) == np.sign(flo)
        lo = np.where(same_lo, x, lo)
        flo = np.where(same_lo, fx, flo)
        hi = np.where(same_lo, hi, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = x - fx / dfx
        inside = np.isfinite(newton) & (newton >= np.minimum(lo, hi)) & (newton <= np.maximum(lo, hi))
        x_new = np.where(inside, newton, 0.5 * (lo + hi))
        x_new = np.where(fx == 0, x, x_new)
        step = np.abs(x_new - x)
        x = np.where(done, x, x_new)
        done |= (step <= xtol * np.maximum(1.0, np.abs(x))) | (fx == 0)
        if np.all(done):
            return x
    idx = int(np.argmax(~done))
    raise ZeroConvergenceError(first_index + idx, nu, "Newton/bisection did not converge")


def _j_and_dj(nu):
    def fn(x):
        j, dj = bessel_j_and_deriv(nu, x)
        return np.asarray(j), np.asarray(dj)

    return fn


def _dj_and_ddj(nu):
    def fn(x):
        j, dj = bessel_j_and_deriv(nu, x)
        j, dj = np.asarray(j), np.asarray(dj)
        ddj = -dj / x - (1.0 - (nu / x) ** 2) * j
        return dj, ddj

    return fn


def bessel_zeros(nu: float, count: int) -> ZeroTable:
    """First ``count`` positive zeros of J_nu and of J'_nu.

    Each zero of J_nu is bracketed by the McMahon estimate plus or minus pi/2
    and polished with Newton steps that fall back to bisection whenever they
    leave the bracket.  A sign-change scan afterwards confirms that no zero
    was skipped.
    """
    nu = _check_order(nu, NU_MAX - 1.0)
    if int(count) != count or count < 1:
        raise ValueError("count must be a positive integer")
    count = int(count)
    k = np.arange(1, count + 1, dtype=float)
    guess = _mcmahon(nu, k)
    lo = np.maximum(guess - 0.5 * math.pi, 1e-3 + 0.5 * nu)
    hi = guess + 0.5 * math.pi
    zeros = _refine(_j_and_dj(nu), lo, hi, guess, nu, 1)
    _confirm_no_skips(nu, zeros)

    # derivative zeros: one in (nu, j_1) for nu > 0, one in each (j_{k-1}, j_k)
    dlo = np.empty(count)
    dhi = np.empty(count)
    dlo[1:] = zeros[:-1]
    dhi[1:] = zeros[1:]
    dhi[0] = zeros[0]
    if nu == 0.0:
        dzeros = np.empty(count)
        dzeros[0] = 0.0
        if count > 1:
            dzeros[1:] = _refine(_dj_and_ddj(nu), dlo[1:], dhi[1:], 0.5 * (dlo[1:] + dhi[1:]), nu, 2)
    else:
        dlo[0] = max(nu, 1e-3) if nu >= 1e-3 else 0.5 * zeros[0] * 1e-3
        dzeros = _refine(_dj_and_ddj(nu), dlo, dhi, 0.5 * (dlo + dhi), nu, 1)
    return ZeroTable(nu=nu, zeros=zeros, derivative_zeros=dzeros)


def _confirm_no_skips(nu: float, zeros: np.ndarray) -> None:
    if np.any(np.diff(zeros) <= 1.0):
        idx = int(np.argmax(np.diff(zeros) <= 1.0)) + 2
        raise ZeroConvergenceError(idx, nu, "duplicate or out-of-order zero")
    # between consecutive zeros J_nu keeps one sign; sample the open gaps
    edges = np.concatenate(([min(1e-6, 0.5 * zeros[0])], zeros))
    offsets = np.linspace(0.02, 0.98, 25)
    pts = edges[:-1, None] + offsets[None, :] * np.diff(edges)[:, None]
    vals = np.asarray(bessel_j(nu, pts.ravel())).reshape(pts.shape)
    flips = np.any(np.sign(vals[:, 1:]) != np.sign(vals[:, :1]), axis=1)
    if np.any(flips):
        idx = int(np.argmax(flips)) + 1
        raise ZeroConvergenceError(idx, nu, "sign change found inside a gap; a zero was skipped")


# --------------------------------------------------------------------------
# weighted integrals


def lommel_weighted_integral(nu: float, c: float) -> float:
    """Closed form of int_0^c z J_nu(z)^2 dz."""
    if c <= 0:
        raise BesselDomainError("upper limit must be > 0")
    nu = _check_order(nu, NU_MAX - 1.0)
    j0, j1 = bessel_j_pair(nu, c)
    jm = bessel_j_lower(nu, c)
    return 0.5 * c * c * (j0 * j0 - jm * j1)


def lommel_sigma_identity_check(nu: float, z: float, quad=None) -> float:
    """Residual of the sigma = 1 Lommel-type reduction of int t^3 J_nu^2.

    Checks ``3 I3 = 2 (nu^2 - 1) I1 + z^2/2 [(z J' - J)^2 + (z^2 - nu^2 + 1) J^2]``
    with ``I3 = int_0^z t^3 J_nu(t)^2 dt`` by quadrature and
    ``I1 = int_0^z t J_nu(t)^2 dt`` from :func:`lommel_weighted_integral`.
    """
    from .quadrature import integrate_adaptive

    if z <= 0:
        raise BesselDomainError("upper limit must be > 0")
    nu = _check_order(nu, NU_MAX - 1.0)
    if quad is None:
        i3 = integrate_adaptive(lambda t: t**3 * np.asarray(bessel_j(nu, t)) ** 2, 0.0, z, tol=1e-14)
    else:
        i3 = quad(lambda t: t**3 * np.asarray(bessel_j(nu, t)) ** 2, 0.0, z)
    i1 = lommel_weighted_integral(nu, z)
    j, dj = bessel_j_and_deriv(nu, z)
    rhs = 2.0 * (nu * nu - 1.0) * i1 + 0.5 * z * z * ((z * dj - j) ** 2 + (z * z - nu * nu + 1.0) * j * j)
    return 3.0 * i3 - rhs
