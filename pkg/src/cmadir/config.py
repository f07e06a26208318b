"""Run configuration: strict ``section.key = value`` text files.

Example::

    n = 2
    domain.kind = ball
    phi.name = re_z1
    f.name = zero
    grid.h = 0.1

Unknown keys, malformed values and out-of-range numbers are reported with
their line number. Every default that is used is recorded in
``RunConfig.defaults_used`` so the run log can echo it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

from .catalog import lookup, parse_terms
from .domain import make_domain
from .hermitian import DEFAULT_LADDER, build_direction_set

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """A configuration problem, optionally tied to a line of the file."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = f"{path or 'config'}:{line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


def _positive(x):
    return x > 0


def _nonneg(x):
    return x >= 0


# key -> (type, default, check, description of the valid range)
_FIXED = {
    "n": (int, 2, lambda x: 1 <= x <= 4, "1 <= n <= 4"),
    "grid.h": (float, None, _positive, "> 0"),
    "grid.margin": (float, None, _nonneg, ">= 0"),
    "grid.node_budget": (int, 20_000_000, _positive, "> 0"),
    "directions.frames": (int, 32, _positive, ">= 1"),
    "directions.ladder": (list, list(DEFAULT_LADDER), lambda v: len(v) > 0 and all(x > 0 for x in v), "positive list"),
    "directions.seed": (int, 0, _nonneg, ">= 0"),
    "directions.arm_scale": (float, 2.0, lambda x: x >= 1.0, ">= 1"),
    "solver.tol": (float, None, _positive, "> 0"),
    "solver.max_sweeps": (int, 100_000, _positive, ">= 1"),
    "solver.mode": (str, "gauss_seidel", lambda s: s in ("gauss_seidel", "jacobi"), "gauss_seidel | jacobi"),
    "analysis.t_min_factor": (float, 2.0, lambda x: x >= 2.0, ">= 2"),
    "analysis.t_points": (int, 24, lambda x: x >= 5, ">= 5"),
    "analysis.pair_budget": (int, 2_000_000, _nonneg, ">= 0"),
    "analysis.seed": (int, 0, _nonneg, ">= 0"),
    "analysis.eta_cap": (float, 1e3, _positive, "> 0"),
    "analysis.psi": (str, "power:1", lambda s: s.split(":")[0] in ("power", "log"), "power:a | log:a"),
    "barriers.xi_count": (int, 200, _positive, ">= 1"),
    "barriers.ball_scale": (float, 2.0, lambda x: x > 1.0, "> 1"),
    "barriers.seed": (int, 0, _nonneg, ">= 0"),
    "f.kind": (str, "continuous", lambda s: s in ("continuous", "lp"), "continuous | lp"),
    "f.p": (float, None, lambda x: x > 1, "> 1"),
    "f.ladder": (list, [4.0, 16.0, 64.0], lambda v: len(v) > 0 and v[0] > 0
                 and all(b > a for a, b in zip(v, v[1:])), "positive, strictly increasing"),
    "output.dir": (str, "out", lambda s: len(s) > 0, "nonempty"),
}

_DOMAIN_KEYS = {
    "ball": {"center", "radius"},
    "intersection_of_balls": {"balls"},
    "l1_ball": {"scale", "lipschitz"},
    "strictly_convex": {"expr", "axes"},
    "polydisc": {"radius"},
}


def _scalar(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "false"):
        return low == "true"
    for conv in (int, float):
        try:
            return conv(t)
        except ValueError:
            pass
    try:
        z = complex(t.replace(" ", ""))
        return z
    except ValueError:
        return t


def parse_value(text: str, key: str = ""):
    """Scalar, comma-separated list, or (for ``*.terms``) polynomial terms."""
    text = text.strip()
    if key.endswith(".terms"):
        return [list(t) for t in parse_terms(text)]
    if ";" in text:
        return [parse_value(part) for part in text.split(";") if part.strip()]
    if "," in text:
        return [_scalar(p) for p in text.split(",")]
    return _scalar(text)


def _coerce(kind, value, key):
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise TypeError(f"{key} expects an integer")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError(f"{key} expects a number")
        if not math.isfinite(value):
            raise TypeError(f"{key} must be finite")
        return float(value)
    if kind is str:
        return str(value)
    if kind is list:
        vals = value if isinstance(value, list) else [value]
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
            raise TypeError(f"{key} expects a list of numbers")
        return [float(v) for v in vals]
    raise TypeError(key)


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    domain_params: dict = field(default_factory=dict)
    phi_params: dict = field(default_factory=dict)
    f_params: dict = field(default_factory=dict)
    domain_kind: str = "ball"
    phi_name: str = "zero"
    f_name: str = "zero"
    defaults_used: list = field(default_factory=list)
    source: str = ""
    text: str = ""

    def __getitem__(self, key):
        return self.values[key]

    # builders -------------------------------------------------------

    def domain(self):
        params = dict(self.domain_params)
        if "center" in params:
            c = params["center"]
            params["center"] = c if isinstance(c, list) else [c]
        return make_domain(self.domain_kind, self["n"], **params)

    def phi(self):
        return lookup(self.phi_name, **self.phi_params)

    def f(self):
        return lookup(self.f_name, **self.f_params)

    def directions(self):
        return build_direction_set(self["n"], self["directions.frames"], self["directions.ladder"],
                                   self["directions.seed"])

    def problem(self, **overrides):
        from .solver import ProblemSpec

        kw = dict(domain=self.domain(), phi=self.phi(), f=self.f(), directions=self.directions(),
                  grid_h=self["grid.h"], arm_scale=self["directions.arm_scale"], f_kind=self["f.kind"],
                  p=self["f.p"], margin=self["grid.margin"], node_budget=self["grid.node_budget"])
        kw.update(overrides)
        return ProblemSpec(**kw)

    def echo(self) -> dict:
        out = {"n": self["n"], "domain.kind": self.domain_kind, "phi.name": self.phi_name, "f.name": self.f_name}
        out.update({f"domain.{k}": v for k, v in self.domain_params.items()})
        out.update({f"phi.{k}": v for k, v in self.phi_params.items()})
        out.update({f"f.{k}": v for k, v in self.f_params.items()})
        out.update({k: v for k, v in self.values.items() if k != "n"})
        return {k: (repr(v) if isinstance(v, complex) else v) for k, v in out.items()}


def parse_config_text(text: str, source: str = "config", overrides: dict | None = None) -> RunConfig:
    cfg = RunConfig(source=source, text=text)
    seen: dict[str, int] = {}
    raw: dict[str, tuple[object, int]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError("expected 'key = value'", lineno, source)
        key, _, val = body.partition("=")
        key, val = key.strip(), val.strip()
        if not key or not val:
            raise ConfigError("empty key or value", lineno, source)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key]})", lineno, source)
        seen[key] = lineno
        try:
            raw[key] = (parse_value(val, key), lineno)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}", lineno, source) from None
    for key, val in (overrides or {}).items():
        raw[key] = (parse_value(str(val), key) if isinstance(val, str) else val, None)

    for key, (val, lineno) in raw.items():
        section, _, name = key.partition(".")
        if key in _FIXED:
            kind, _, check, rng = _FIXED[key]
            try:
                v = _coerce(kind, val, key)
            except TypeError as exc:
                raise ConfigError(str(exc), lineno, source) from None
            if not check(v):
                raise ConfigError(f"{key} = {v!r} out of range ({rng})", lineno, source)
            cfg.values[key] = v
        elif key == "domain.kind":
            cfg.domain_kind = str(val).lower().replace("-", "_")
            if cfg.domain_kind not in _DOMAIN_KEYS:
                raise ConfigError(f"unknown domain kind {val!r}", lineno, source)
        elif key in ("phi.name", "f.name"):
            setattr(cfg, section + "_name", str(val))
        elif section in ("domain", "phi", "f") and name and "." not in name:
            getattr(cfg, section + "_params")[name] = val
        else:
            raise ConfigError(f"unknown key {key!r}", lineno, source)

    for key, (_, default, _, _) in _FIXED.items():
        if key not in cfg.values:
            cfg.values[key] = default
            cfg.defaults_used.append((key, default))
    for key, default in (("domain.kind", "ball"), ("phi.name", "zero"), ("f.name", "zero")):
        if key not in raw:
            cfg.defaults_used.append((key, default))
    if cfg.values["grid.h"] is None:
        raise ConfigError("grid.h is required", None, source)

    def line_of(prefix):
        return next((ln for k, (_, ln) in raw.items() if k.startswith(prefix)), None)

    bad = set(cfg.domain_params) - _DOMAIN_KEYS[cfg.domain_kind]
    if bad:
        k = sorted(bad)[0]
        raise ConfigError(f"unknown key domain.{k} for domain kind {cfg.domain_kind}", raw[f"domain.{k}"][1], source)
    for section in ("phi", "f"):
        try:
            getattr(cfg, section)()
        except ValueError as exc:
            raise ConfigError(f"{section}: {exc}", line_of(section + "."), source) from None
    try:
        cfg.domain()
    except ValueError as exc:
        raise ConfigError(f"domain: {exc}", line_of("domain."), source) from None
    if cfg.values["f.kind"] == "lp" and cfg.values["f.p"] is None:
        raise ConfigError("f.kind = lp needs f.p", line_of("f.kind"), source)
    for key, default in cfg.defaults_used:
        log.info("default %s = %r", key, default)
    return cfg


def parse_config(path, overrides: dict | None = None) -> RunConfig:
    """Read and validate a configuration file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except UnicodeDecodeError:
        raise ConfigError(f"{path} is not UTF-8") from None
    return parse_config_text(text, str(path), overrides)
