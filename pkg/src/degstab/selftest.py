"""Invariant suite for the Bessel substrate (recurrences, closed forms, zero tables)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bessel import (
    bessel_j,
    bessel_j_deriv,
    bessel_j_lower,
    bessel_j_pair,
    bessel_zeros,
    lommel_weighted_integral,
)

ZERO_ORDERS = (0.0, 0.25, 1.0 / 3.0, 0.5)


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    value: float  # worst deviation observed
    tol: float


def _grid():
    nus = np.linspace(0.0, 3.0, 13)
    xs = np.concatenate([np.linspace(0.05, 30.0, 150), np.linspace(30.0, 100.0, 60)])
    return nus, xs


def recurrence_check(tol: float = 1e-10) -> CheckResult:
    """J_{nu-1} + J_{nu+1} = (2 nu / x) J_nu, relative to the largest term."""
    nus, xs = _grid()
    worst = 0.0
    for nu in nus[nus >= 1.0]:
        jm = np.asarray(bessel_j(nu - 1.0, xs))
        j0, jp = bessel_j_pair(nu, xs)
        scale = np.maximum.reduce([np.abs(jm), np.abs(jp), np.abs(2 * nu / xs * j0), np.full_like(xs, 1e-300)])
        worst = max(worst, float(np.max(np.abs(jm + jp - 2 * nu / xs * j0) / scale)))
    return CheckResult("recurrence", worst <= tol, worst, tol)


def derivative_identity_check(tol: float = 1e-10) -> CheckResult:
    """2 J'_nu = J_{nu-1} - J_{nu+1}, with J'_nu from its own code path."""
    nus, xs = _grid()
    worst = 0.0
    for nu in nus:
        d = np.asarray(bessel_j_deriv(nu, xs))
        jm = np.asarray(bessel_j_lower(nu, xs))
        jp = np.asarray(bessel_j_pair(nu, xs)[1])
        scale = np.maximum(np.maximum(np.abs(jm), np.abs(jp)), 1e-300)
        worst = max(worst, float(np.max(np.abs(2 * d - (jm - jp)) / scale)))
    return CheckResult("derivative identity", worst <= tol, worst, tol)


def half_integer_check(tol: float = 1e-10) -> CheckResult:
    """J_{1/2}, J_{3/2}, J_{5/2} against their sine/cosine closed forms."""
    x = np.linspace(0.01, 100.0, 2000)
    s, c = np.sin(x), np.cos(x)
    pref = np.sqrt(2.0 / (math.pi * x))
    forms = {
        0.5: pref * s,
        1.5: pref * (s / x - c),
        2.5: pref * ((3.0 / x**2 - 1.0) * s - 3.0 * c / x),
    }
    worst = 0.0
    for nu, exact in forms.items():
        worst = max(worst, float(np.max(np.abs(np.asarray(bessel_j(nu, x)) - exact) / np.maximum(pref, 1e-300))))
    return CheckResult("half-integer closed forms", worst <= tol, worst, tol)


def lommel_check(tol: float = 1e-12) -> CheckResult:
    """int_0^pi z J_{1/2}(z)^2 dz = 1."""
    dev = abs(lommel_weighted_integral(0.5, math.pi) - 1.0)
    return CheckResult("Lommel integral nu=1/2, c=pi", dev <= tol, dev, tol)


def zero_table_checks(orders=ZERO_ORDERS, count: int = 50) -> list[CheckResult]:
    out = []
    for nu in orders:
        table = bessel_zeros(nu, count)
        z, dz = table.zeros, table.derivative_zeros
        resid = float(np.max(np.abs(np.asarray(bessel_j(nu, z)))))
        out.append(CheckResult(f"nu={nu:.4g}: |J(j_k)|", resid <= 1e-10, resid, 1e-10))
        h = 1e-7 * z
        flips = np.sign(np.asarray(bessel_j(nu, z - h))) != np.sign(np.asarray(bessel_j(nu, z + h)))
        out.append(CheckResult(f"nu={nu:.4g}: sign change at zeros", bool(np.all(flips)), float(np.sum(~flips)), 0.0))
        ordered = bool(np.all(np.diff(z) > 0) and np.all(np.diff(dz) > 0))
        out.append(CheckResult(f"nu={nu:.4g}: strictly increasing", ordered, 0.0, 0.0))
        lower_ok = bool(dz[0] >= nu) if nu > 0 else bool(dz[0] == 0.0)
        inter = lower_ok and bool(np.all(dz < z)) and bool(np.all(z[:-1] < dz[1:]))
        out.append(CheckResult(f"nu={nu:.4g}: interlacing", inter, 0.0, 0.0))
        diffs = np.diff(z)
        steps = np.diff(diffs)
        if nu <= 0.5:
            mono = float(max(0.0, -steps.min()))
        else:
            mono = float(max(0.0, steps.max()))
        # zeros carry rounding ~ eps * j_k, so flat spacings wobble at that level
        mtol = 16.0 * np.finfo(float).eps * float(z[-1])
        out.append(CheckResult(f"nu={nu:.4g}: difference monotonicity", mono <= mtol, mono, mtol))
        approach = float(abs(diffs[-1] - math.pi))
        first = float(abs(diffs[0] - math.pi))
        out.append(CheckResult(f"nu={nu:.4g}: differences approach pi", approach <= first + 1e-12, approach, first))
    return out


def run_selftest() -> list[CheckResult]:
    return [
        recurrence_check(),
        derivative_identity_check(),
        half_integer_check(),
        lommel_check(),
        *zero_table_checks(),
    ]
