"""Run configuration: JSON file plus command-line overrides (flags win)."""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field, fields, replace

from .spectral import ALPHA_MAX

DEFAULT_GRID = (0.0, 0.3, 0.5, 0.9, 1.0, 1.2, 1.49)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimulateConfig:
    u0: str | None = "phi1+0.05*phi2"
    u0_coeffs: tuple[float, ...] | None = None
    T: float = 1.0
    record_dt: float = 0.05
    p_const: float = 0.0
    full_state: bool = False


@dataclass(frozen=True)
class StabilizeConfig:
    u0: str | None = "phi1+0.05*phi2"
    u0_coeffs: tuple[float, ...] | None = None
    window_length: float = 0.5
    windows: int = 4
    n1: int = 2
    modes_per_window: tuple[int, ...] | None = None
    R_cfg: float = 0.1
    record_dt: float | None = None
    radius_sweep: tuple[float, ...] = ()


@dataclass(frozen=True)
class VerifyConfig:
    alphas: tuple[float, ...] = DEFAULT_GRID
    taus: tuple[float, ...] = (0.01, 0.1, 1.0)
    max_k: int = 200
    gram_n: int = 32
    row_k: int = 50
    gap_k: int = 500


@dataclass(frozen=True)
class RunConfig:
    alpha: float = 0.0
    num_modes: int = 64
    quad_tol: float = 1e-12
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    stabilize: StabilizeConfig = field(default_factory=StabilizeConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)

    def to_dict(self) -> dict:
        return asdict(self)


_TERM = re.compile(r"\s*([+-])?\s*(?:([0-9.]+(?:[eE][+-]?\d+)?)\s*\*\s*)?phi(\d+)\s*")


def parse_u0(expr: str, size: int) -> list[float]:
    """Coefficients for an expression such as ``phi1+0.05*phi2-1e-3*phi4``."""
    coeffs = [0.0] * size
    pos = 0
    expr = expr.strip()
    if not expr:
        raise ConfigError("empty u0 expression")
    while pos < len(expr):
        m = _TERM.match(expr, pos)
        if not m or m.end() == pos:
            raise ConfigError(f"cannot parse u0 expression {expr!r} at position {pos}")
        if pos > 0 and m.group(1) is None:
            raise ConfigError(f"missing '+' or '-' in u0 expression {expr!r}")
        k = int(m.group(3))
        if not 1 <= k <= size:
            raise ConfigError(f"u0 uses phi{k} but only {size} modes are retained")
        c = float(m.group(2)) if m.group(2) else 1.0
        coeffs[k - 1] += -c if m.group(1) == "-" else c
        pos = m.end()
    return coeffs


def resolve_u0(block, size: int) -> list[float]:
    if block.u0 is not None and block.u0_coeffs is not None:
        raise ConfigError("conflicting u0 specifications: give either 'u0' or 'u0_coeffs'")
    if block.u0_coeffs is not None:
        c = [float(v) for v in block.u0_coeffs]
        if len(c) > size:
            raise ConfigError(f"u0_coeffs has {len(c)} entries but only {size} modes are retained")
        return c + [0.0] * (size - len(c))
    if block.u0 is None:
        raise ConfigError("no initial state given")
    return parse_u0(block.u0, size)


def _coerce(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"'{where}' must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    out = {}
    for key, value in data.items():
        if isinstance(value, list):
            value = tuple(value)
        out[key] = value
    return out


def from_dict(data: dict) -> RunConfig:
    top = _coerce(RunConfig, data, "config")
    blocks = {"simulate": SimulateConfig, "stabilize": StabilizeConfig, "verify": VerifyConfig}
    for name, cls in blocks.items():
        if name in top:
            values = _coerce(cls, top[name], name)
            # one u0 form given in the file displaces the default of the other
            if "u0_coeffs" in values and "u0" not in values and hasattr(cls, "u0"):
                values["u0"] = None
            top[name] = cls(**values)
    try:
        cfg = RunConfig(**top)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> RunConfig:
    a = cfg.alpha
    if not isinstance(a, (int, float)) or not math.isfinite(a) or not 0.0 <= a < ALPHA_MAX:
        raise ConfigError(
            f"alpha={a!r} is outside the stabilizability scope alpha in [0, 3/2) (weak and strong degeneracy)"
        )
    for alpha in cfg.verify.alphas:
        if not 0.0 <= float(alpha) < ALPHA_MAX:
            raise ConfigError(f"verify grid alpha={alpha} is outside the stabilizability scope [0, 3/2)")
    if int(cfg.num_modes) != cfg.num_modes or cfg.num_modes < 2:
        raise ConfigError("num_modes must be an integer >= 2")
    positive = {
        "quad_tol": cfg.quad_tol,
        "simulate.T": cfg.simulate.T,
        "simulate.record_dt": cfg.simulate.record_dt,
        "stabilize.window_length": cfg.stabilize.window_length,
        "stabilize.R_cfg": cfg.stabilize.R_cfg,
    }
    positive.update({f"verify.taus[{i}]": t for i, t in enumerate(cfg.verify.taus)})
    for name, value in positive.items():
        if not isinstance(value, (int, float)) or not value > 0:
            raise ConfigError(f"{name} must be positive, got {value!r}")
    if cfg.stabilize.windows < 1 or cfg.stabilize.n1 < 1:
        raise ConfigError("stabilize.windows and stabilize.n1 must be >= 1")
    for block in (cfg.simulate, cfg.stabilize):
        if block.u0 is not None and block.u0_coeffs is not None:
            raise ConfigError("conflicting u0 specifications: give either 'u0' or 'u0_coeffs'")
    return cfg


def load(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    return from_dict(data)


def parse_config(path: str | None = None, **overrides) -> RunConfig:
    """Load ``path`` (optional) and apply non-None ``overrides``.

    Top-level overrides use field names (``alpha``, ``num_modes``,
    ``quad_tol``); block fields use ``block__field`` names.  A flag-given u0
    replaces both u0 forms from the file.
    """
    cfg = load(path)
    top, nested = {}, {}
    for key, value in overrides.items():
        if value is None:
            continue
        if "__" in key:
            block, name = key.split("__", 1)
            nested.setdefault(block, {})[name] = value
        else:
            top[key] = value
    for block, values in nested.items():
        current = getattr(cfg, block)
        if "u0" in values and "u0_coeffs" in values:
            raise ConfigError("conflicting u0 specifications on the command line")
        if "u0" in values:
            values.setdefault("u0_coeffs", None)
        if "u0_coeffs" in values:
            values.setdefault("u0", None)
        try:
            top[block] = replace(current, **values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
    return validate(replace(cfg, **top))
