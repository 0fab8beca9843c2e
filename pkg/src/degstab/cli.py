"""Command-line runner: spectrum, operator, verify, simulate, stabilize, bessel-selftest."""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import config as cfgmod
from .bop import (
    build_operator,
    ground_entry_analytic,
    hypothesis_series,
    lower_bound_check,
    positivity_condition,
)
from .dynamics import ControlSignal, TrajectoryState, error_to_ground, simulate
from .selftest import run_selftest
from .spectral import eigenvalues, gap_check, gram_matrix, make_problem
from .stabilize import WindowSchedule, admissible_radius, run_stabilization

SIG = 17


# --------------------------------------------------------------------------
# emission


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), f".{SIG}g")
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


def render(results, fmt: str) -> str:
    """Deterministic text for ``results``.

    CSV takes ``(header, rows)``; JSON takes any mapping.  Floats carry 17
    significant digits in CSV and round-trip exactly in JSON.
    """
    if fmt == "csv":
        header, rows = results
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        for row in rows:
            if len(row) != len(header):
                raise ValueError("row length does not match header")
            buf.write(",".join(_fmt(v) for v in row) + "\n")
        return buf.getvalue()
    if fmt == "json":
        return json.dumps(_jsonable(results), indent=2, sort_keys=True) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def emit(results, fmt: str, path: str | None) -> None:
    """Write ``results`` to ``path`` (stdout when None) with LF line endings."""
    text = render(results, fmt)
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


# --------------------------------------------------------------------------
# verification pipeline


def verify_alpha(alpha: float, vcfg: cfgmod.VerifyConfig, quad_tol: float = 1e-12) -> dict:
    """All hypothesis checks for one alpha; sub-check failures are recorded, not raised."""
    entry: dict = {"alpha": float(alpha)}
    checks: dict = {}
    try:
        problem = make_problem(alpha)
        entry.update(nu=problem.nu, k_alpha=problem.k_alpha, regime=problem.regime)

        gap = gap_check(eigenvalues(problem, vcfg.gap_k + 1))
        entry["gap"] = {
            "min_gap": gap.min_gap,
            "bound": gap.bound,
            "branch": gap.branch,
            "fixed_constant": gap.fixed_constant,
            "fixed_constant_ok": gap.fixed_constant_ok,
        }
        checks["gap"] = gap.ok

        small = eigenvalues(problem, vcfg.gram_n)
        dev = float(np.max(np.abs(gram_matrix(small, tol=quad_tol) - np.eye(small.count))))
        entry["gram_deviation"] = dev
        checks["orthonormality"] = dev <= 1e-8

        big = eigenvalues(problem, vcfg.max_k)
        op = build_operator(big, tol=quad_tol)
        row_dev = op.first_row_deviation(vcfg.row_k)
        entry["first_row_deviation"] = row_dev
        checks["first_row_oracle"] = row_dev <= 1e-8
        entry["symmetry_deviation"] = op.symmetry_deviation()
        entry["operator_norm"] = op.norm
        checks["operator_bounds"] = op.symmetry_deviation() <= 1e-10 and op.norm <= 1.0 + 1e-8
        checks["row_nonzero"] = bool(np.all(np.abs(op.matrix[0]) > 1e-300))

        lb = lower_bound_check(op)
        entry["c_hat"] = lb.c_hat
        checks["lower_bound"] = lb.ok

        series = {}
        ok_series = True
        for tau in vcfg.taus:
            s = hypothesis_series(op, tau)
            series[_fmt(tau)] = {
                "converged": s.converged,
                "tail_ratio": s.tail_ratio,
                "ratio_onset": s.ratio_onset,
                "partial_sum": float(s.partial_sums[-1]),
            }
            ok_series &= s.converged
        entry["series"] = series
        checks["series"] = ok_series

        b11 = ground_entry_analytic(big)
        entry["ground_entry"] = b11
        checks["ground_entry_positive"] = b11 > 0
        left, right = positivity_condition(big)
        entry["positivity_condition"] = {"left": left, "right": right}
        checks["positivity_condition"] = left > right
    except Exception as exc:  # record and continue with the next alpha
        entry["error"] = f"{type(exc).__name__}: {exc}"
        checks["completed"] = False
    entry["checks"] = checks
    entry["pass"] = bool(checks) and all(checks.values())
    return entry


def verify_all(vcfg: cfgmod.VerifyConfig, quad_tol: float = 1e-12, workers: int = 1) -> dict:
    alphas = [float(a) for a in vcfg.alphas]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(verify_alpha, alphas, [vcfg] * len(alphas), [quad_tol] * len(alphas)))
    else:
        entries = [verify_alpha(a, vcfg, quad_tol) for a in alphas]
    return {"alphas": entries, "pass": all(e["pass"] for e in entries)}


# --------------------------------------------------------------------------
# subcommands


def cmd_spectrum(cfg, args) -> bool:
    system = eigenvalues(make_problem(cfg.alpha), cfg.num_modes)
    rows = [(k + 1, system.zeros[k], system.lambdas[k], system.normalizers[k]) for k in range(system.count)]
    emit((["k", "j_nu_k", "lambda_k", "normalizer"], rows), "csv", args.out)
    gap = gap_check(system)
    report = {
        "alpha": cfg.alpha,
        "nu": system.problem.nu,
        "k_alpha": system.problem.k_alpha,
        "regime": system.problem.regime,
        "min_gap": gap.min_gap,
        "gap_bound": gap.bound,
        "gap_ok": gap.ok,
        "fixed_constant": gap.fixed_constant,
        "fixed_constant_ok": gap.fixed_constant_ok,
    }
    if args.report:
        emit(report, "json", args.report)
    return gap.ok


def cmd_operator(cfg, args) -> bool:
    system = eigenvalues(make_problem(cfg.alpha), cfg.num_modes)
    op = build_operator(system, tol=cfg.quad_tol)
    n = op.size
    rows = [(j + 1, *op.matrix[j]) for j in range(n)]
    emit((["j", *[f"b_{k + 1}" for k in range(n)]], rows), "csv", args.out)
    lb = lower_bound_check(op)
    series = hypothesis_series(op, args.tau)
    report = {
        "symmetry_dev": op.symmetry_deviation(),
        "first_row_dev": op.first_row_deviation(),
        "c_hat": lb.c_hat,
        "series_converged": series.converged,
    }
    if args.report:
        emit(report, "json", args.report)
    return report["symmetry_dev"] <= 1e-10 and report["first_row_dev"] <= 1e-8 and lb.ok and series.converged


def cmd_verify(cfg, args) -> bool:
    result = verify_all(cfg.verify, cfg.quad_tol, workers=args.workers)
    rows = []
    for e in result["alphas"]:
        rows.append(
            (
                e["alpha"],
                e.get("gap", {}).get("min_gap", math.nan),
                e.get("gram_deviation", math.nan),
                e.get("first_row_deviation", math.nan),
                e.get("c_hat", math.nan),
                e.get("ground_entry", math.nan),
                e["pass"],
            )
        )
    header = ["alpha", "min_gap", "gram_dev", "first_row_dev", "c_hat", "ground_entry", "pass"]
    emit((header, rows), "csv", args.out)
    if args.report:
        emit(result, "json", args.report)
    return result["pass"]


def _trajectory(cfg, num, coeffs):
    system = eigenvalues(make_problem(cfg.alpha), num)
    op = build_operator(system, tol=cfg.quad_tol)
    c = np.zeros(num)
    c[: min(num, len(coeffs))] = coeffs[:num]
    u0 = TrajectoryState.from_coeffs(system, c)
    s = cfg.simulate
    p = ControlSignal.constant(s.p_const, 0.0, s.T) if s.p_const else ControlSignal.zero()
    return system, simulate(u0, p, s.T, op, record_dt=s.record_dt)


def cmd_simulate(cfg, args) -> bool:
    n = cfg.num_modes
    coeffs = cfgmod.resolve_u0(cfg.simulate, n)
    system, path = _trajectory(cfg, n, coeffs)
    width = n if cfg.simulate.full_state else min(8, n)
    lam1 = system.lambdas[0]
    rows = []
    for st in path:
        e = error_to_ground(st)
        rows.append((st.t, e, st.shifted_error, *st.coeffs[:width]))
    header = ["t", "err", "shifted_err", *[f"coeff_{k + 1}" for k in range(width)]]
    emit((header, rows), "csv", args.out)
    # tail sensitivity: the same run with twice the modes
    _, path2 = _trajectory(cfg, 2 * n, coeffs + [0.0] * n)
    diff = abs(error_to_ground(path[-1]) - error_to_ground(path2[-1]))
    report = {
        "alpha": cfg.alpha,
        "num_modes": n,
        "lambda1": lam1,
        "final_error": error_to_ground(path[-1]),
        "final_shifted_error": path[-1].shifted_error,
        "tail_sensitivity": {"modes": [n, 2 * n], "abs_difference": diff, "ok": diff < 1e-6},
    }
    if args.report:
        emit(report, "json", args.report)
    return diff < 1e-6


def _schedule(cfg):
    s = cfg.stabilize
    if s.modes_per_window is not None:
        return WindowSchedule(s.window_length, s.windows, tuple(s.modes_per_window))
    return WindowSchedule.growing(s.window_length, s.windows, s.n1, cfg.num_modes)


def report_dict(rep) -> dict:
    return {
        "times": rep.times,
        "errors": rep.errors,
        "shifted_errors": rep.shifted_errors,
        "baseline_shifted_errors": rep.baseline_shifted,
        "log_reductions": rep.log_reductions,
        "strictly_decreasing": rep.strictly_decreasing,
        "accelerating": rep.accelerating,
        "rho_hat": rep.rho_hat,
        "omega_hat": rep.omega_hat,
        "M_hat": rep.M_hat,
        "r2": rep.r2,
        "fit_status": rep.fit_status,
        "hypothesis_summary": rep.hypothesis_summary,
        "windows": [
            {
                "modes_requested": w.modes_requested,
                "modes_used": w.modes_used,
                "gram_condition": w.condition,
                "corrections": w.corrections,
                "residual": w.residual,
                "coefficients": w.signal.coefficients,
            }
            for w in rep.windows
        ],
    }


def cmd_stabilize(cfg, args) -> bool:
    system = eigenvalues(make_problem(cfg.alpha), cfg.num_modes)
    op = build_operator(system, tol=cfg.quad_tol)
    s = cfg.stabilize
    u0 = TrajectoryState.from_coeffs(system, cfgmod.resolve_u0(s, cfg.num_modes))
    schedule = _schedule(cfg)
    rep = run_stabilization(u0, schedule, op, radius=s.R_cfg, record_dt=s.record_dt)
    rows = [(st.t, error_to_ground(st), st.shifted_error) for st in rep.trajectory]
    emit((["t", "err", "shifted_err"], rows), "csv", args.out)
    report = {"alpha": cfg.alpha, "num_modes": cfg.num_modes, "R_cfg": s.R_cfg, **report_dict(rep)}
    if s.radius_sweep:
        report["largest_tested_radius"] = admissible_radius(op, schedule, s.radius_sweep)
    if args.report:
        emit(report, "json", args.report)
    return rep.success and rep.fit_status == "ok"


def cmd_selftest(cfg, args) -> bool:
    results = run_selftest()
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name}  (worst {r.value:.3g})")
    ok = all(r.ok for r in results)
    print("bessel-selftest:", "PASS" if ok else "FAIL")
    return ok


COMMANDS = {
    "spectrum": cmd_spectrum,
    "operator": cmd_operator,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "stabilize": cmd_stabilize,
    "bessel-selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--alpha", type=float, help="degeneracy exponent in [0, 3/2)")
    common.add_argument("--num", type=int, dest="num_modes", help="number of retained modes N")
    common.add_argument("--quad-tol", type=float, dest="quad_tol", help="quadrature tolerance")
    common.add_argument("--out", help="CSV output path (stdout if omitted)")
    common.add_argument("--report", help="JSON report path")
    common.add_argument("--config", help="JSON configuration file")

    parser = argparse.ArgumentParser(prog="degstab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("spectrum", parents=[common], help="eigenvalues and normalisers")
    op = sub.add_parser("operator", parents=[common], help="control operator matrix and checks")
    op.add_argument("--tau", type=float, default=0.1, help="tau of the hypothesis series")
    ver = sub.add_parser("verify", parents=[common], help="hypothesis verification over an alpha grid")
    ver.add_argument("--alphas", type=float, nargs="+", help="alpha grid")
    ver.add_argument("--workers", type=int, default=1)
    sim = sub.add_parser("simulate", parents=[common], help="Galerkin trajectory")
    sim.add_argument("--u0", help='initial state, e.g. "phi1+0.05*phi2"')
    sim.add_argument("--T", type=float)
    sim.add_argument("--record-dt", type=float, dest="record_dt")
    sim.add_argument("--p-const", type=float, dest="p_const")
    sim.add_argument("--full-state", action="store_true", default=None, dest="full_state")
    stab = sub.add_parser("stabilize", parents=[common], help="windowed stabilization run")
    stab.add_argument("--u0", help='initial state, e.g. "phi1+0.05*phi2"')
    stab.add_argument("--windows", type=int)
    stab.add_argument("--window-length", type=float, dest="window_length")
    stab.add_argument("--n1", type=int)
    stab.add_argument("--radius", type=float, dest="R_cfg")
    stab.add_argument("--record-dt", type=float, dest="record_dt")
    sub.add_parser("bessel-selftest", parents=[common], help=argparse.SUPPRESS)
    return parser


def _overrides(args) -> dict:
    out = {"alpha": args.alpha, "num_modes": args.num_modes, "quad_tol": args.quad_tol}
    block = {"simulate": "simulate", "stabilize": "stabilize", "verify": "verify"}.get(args.command)
    if block is None:
        return out
    names = {
        "simulate": ("u0", "T", "record_dt", "p_const", "full_state"),
        "stabilize": ("u0", "windows", "window_length", "n1", "R_cfg", "record_dt"),
        "verify": ("alphas",),
    }[block]
    for name in names:
        value = getattr(args, name, None)
        if isinstance(value, list):
            value = tuple(value)
        out[f"{block}__{name}"] = value
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = cfgmod.parse_config(args.config, **_overrides(args))
    except cfgmod.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        ok = COMMANDS[args.command](cfg, args)
    except (cfgmod.ConfigError, ValueError, OSError, RuntimeError) as exc:
        print(f"{args.command} failed: {exc}", file=sys.stderr)
        return 1
    return 0 if ok else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
