"""Command-line entry point: ``cmadir <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 numeric error, 4 verdict
FAIL, 5 resource cap exceeded. Every artifact is written under the output
directory together with ``config.echo.json`` (full configuration, seeds and
library version).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

log = logging.getLogger("cmadir")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_FAIL, EXIT_RESOURCE = 0, 2, 3, 4, 5


def library_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _set_threads(threads: int) -> None:
    if threads and threads > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
            os.environ[var] = str(threads)
        try:
            import numba

            numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
        except (ImportError, ValueError):
            pass


def _load_config(args):
    from .config import parse_config, parse_config_text

    overrides = dict(kv.split("=", 1) for kv in (args.set or []))
    overrides = {k.strip(): v.strip() for k, v in overrides.items()}
    if args.output:
        overrides["output.dir"] = args.output
    if args.config:
        return parse_config(args.config, overrides)
    return parse_config_text(args.default_config, "<builtin>", overrides)


def _outdir(cfg) -> Path:
    out = Path(cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _meta(cfg, command: str) -> dict:
    return {"command": command, "version": library_version(), "config": cfg.echo()}


def _write_echo(cfg, out: Path, command: str) -> None:
    from .fieldio import write_text

    write_text(out / "config.echo.json", json.dumps(_meta(cfg, command), indent=2, sort_keys=True, default=str))


def _verdict_exit(verdict, out: Path) -> int:
    from .fieldio import write_text

    write_text(out / f"verdict-{verdict.name}.json", verdict.to_text())
    print(f"{verdict.name}: {'PASS' if verdict.passed else 'FAIL'}")
    return EXIT_OK if verdict.passed else EXIT_FAIL


def _solve_kw(cfg) -> dict:
    return {"tol": cfg["solver.tol"], "max_sweeps": cfg["solver.max_sweeps"], "sweep_mode": cfg["solver.mode"]}


# ------------------------------------------------------------ commands


def cmd_solve(args, cfg) -> int:
    from .fieldio import write_field, write_text
    from .solver import solve

    out = _outdir(cfg)
    _write_echo(cfg, out, "solve")
    problem = cfg.problem()
    log.info("directions %s", problem.directions.descriptor())
    u, rep = solve(problem, **_solve_kw(cfg))
    meta = _meta(cfg, "solve") | {"tol": rep.tol, "iterations": rep.iterations,
                                   "directions": problem.directions.descriptor()}
    write_field(out / "field.csv", u, meta)
    write_text(out / "solver-report.json", json.dumps(rep.summary(), indent=2, sort_keys=True))
    print(f"solve: {rep.iterations} sweeps, converged={rep.converged}, residual={rep.final_residual:.3e}")
    return EXIT_OK


def cmd_solve_lp(args, cfg) -> int:
    from .fieldio import write_field, write_text
    from .solver import solve_lp

    out = _outdir(cfg)
    _write_echo(cfg, out, "solve-lp")
    problem = cfg.problem()
    if problem.f_kind != "lp":
        problem = problem.with_data(f_kind="lp")
        if problem.p is None:
            raise ValueError("solve-lp needs f.p")
    top, gaps, res = solve_lp(problem, cfg["f.ladder"], **_solve_kw(cfg))
    for level, u, rep in zip(res.levels, res.fields, res.reports):
        write_field(out / f"field-M{level:g}.csv", u, _meta(cfg, "solve-lp") | {"truncation": level,
                                                                              "tol": rep.tol,
                                                                              "iterations": rep.iterations})
    report = {"levels": res.levels, "gaps": gaps, "reports": [r.summary() for r in res.reports]}
    write_text(out / "ladder-report.json", json.dumps(report, indent=2, sort_keys=True))
    print("solve-lp: gaps " + ", ".join(f"{g:.4e}" for g in gaps))
    return EXIT_OK


def cmd_barriers(args, cfg) -> int:
    from .barriers import barrier_bundle, composite_barrier_lp
    from .fieldio import write_field, write_text

    out = _outdir(cfg)
    _write_echo(cfg, out, "barriers")
    problem = cfg.problem()
    if problem.f_kind == "lp":
        bundle = composite_barrier_lp(problem, cfg["f.ladder"], cfg["barriers.ball_scale"], tol=cfg["solver.tol"],
                                      xi_count=cfg["barriers.xi_count"], seed=cfg["barriers.seed"],
                                      max_sweeps=cfg["solver.max_sweeps"], sweep_mode=cfg["solver.mode"])
    else:
        bundle = barrier_bundle(problem, cfg["barriers.xi_count"], cfg["barriers.seed"])
    meta = _meta(cfg, "barriers") | {"provenance": bundle.provenance}
    write_field(out / "sub-barrier.csv", bundle.sub, meta)
    write_field(out / "super-barrier.csv", bundle.super, meta)
    write_text(out / "barrier-report.json", bundle.report())
    print(f"barriers: {bundle.provenance}")
    return EXIT_OK


def _field_or_solve(args, cfg):
    from .fieldio import read_field
    from .solver import solve

    problem = cfg.problem()
    if getattr(args, "field", None):
        return read_field(args.field, problem.grid), problem
    u, _ = solve(problem, **_solve_kw(cfg))
    return u, problem


def _t_grid(cfg, problem):
    from .analysis import default_t_grid

    return default_t_grid(problem.grid_h, problem.domain.diameter, cfg["analysis.t_points"],
                          cfg["analysis.t_min_factor"])


def cmd_modulus(args, cfg) -> int:
    from .analysis import empirical_modulus
    from .fieldio import write_modulus

    out = _outdir(cfg)
    _write_echo(cfg, out, "modulus")
    u, problem = _field_or_solve(args, cfg)
    curve = empirical_modulus(u, _t_grid(cfg, problem), cfg["analysis.pair_budget"], cfg["analysis.seed"])
    write_modulus(out / "modulus.csv", curve.t, curve.omega, curve.majorant(curve.t), _meta(cfg, "modulus"))
    print(f"modulus: {curve.t.size} values written")
    return EXIT_OK


def cmd_exponent(args, cfg) -> int:
    from .analysis import empirical_modulus, fit_exponent
    from .fieldio import write_text

    out = _outdir(cfg)
    _write_echo(cfg, out, "exponent")
    u, problem = _field_or_solve(args, cfg)
    lo = args.t_min if args.t_min is not None else cfg["analysis.t_min_factor"] * problem.grid_h
    hi = args.t_max if args.t_max is not None else 0.2 * problem.domain.diameter
    if not hi > lo:
        raise ValueError(f"empty fit range [{lo:g}, {hi:g}]; refine grid.h or pass --t-min/--t-max")
    curve = empirical_modulus(u, np.geomspace(lo, hi, cfg["analysis.t_points"]), cfg["analysis.pair_budget"],
                              cfg["analysis.seed"])
    fit = fit_exponent(curve, (lo, hi), cfg["analysis.pair_budget"])
    write_text(out / "exponent.json", fit.to_text())
    print(f"exponent: slope {fit.slope:.4f} (rms {fit.residual:.3e}) on [{lo:g}, {hi:g}]")
    return EXIT_OK


def cmd_verify(args, cfg) -> int:
    from . import suites

    out = _outdir(cfg)
    _write_echo(cfg, out, f"verify {args.suite}")
    kw = _solve_kw(cfg)
    name = args.suite
    if name == "gaveau":
        v = suites.gaveau_suite(frames=cfg["directions.frames"] if args.config else 64,
                                ladder=cfg["directions.ladder"], seed=cfg["directions.seed"])
    elif name == "equivalence":
        v = suites.equivalence_suite(n=cfg["n"], seed=cfg["directions.seed"])
    elif name == "comparison":
        v = suites.comparison_suite(cfg.problem(), xi_count=cfg["barriers.xi_count"], seed=cfg["barriers.seed"],
                                    pair_budget=cfg["analysis.pair_budget"], **kw)
    elif name == "stability":
        v = suites.stability_suite(cfg.problem(), **kw)
    elif name == "mass":
        v = suites.mass_suite(cfg.problem(), xi_count=cfg["barriers.xi_count"], seed=cfg["barriers.seed"], **kw)
    elif name == "theorem-a":
        v = suites.theorem_a_suite(cfg.problem(), eta_cap=cfg["analysis.eta_cap"],
                                   pair_budget=cfg["analysis.pair_budget"], seed=cfg["analysis.seed"], **kw)
    elif name == "theorem-b":
        problem = cfg.problem()
        if problem.p is None:
            raise ValueError("verify theorem-b needs f.p (and f.kind = lp)")
        v = suites.theorem_b_suite(problem.with_data(f_kind="lp"), cfg["f.ladder"],
                                   pair_budget=cfg["analysis.pair_budget"], seed=cfg["analysis.seed"], **kw)
    else:  # argparse restricts the choices
        raise ValueError(f"unknown suite {name!r}")
    return _verdict_exit(v, out)


def cmd_example_ball(args, cfg) -> int:
    from .analysis import empirical_modulus, fit_exponent
    from .catalog import example47_exact, lookup
    from .fieldio import write_field, write_modulus, write_text
    from .solver import solve

    out = _outdir(cfg)
    _write_echo(cfg, out, f"example-ball --psi {args.psi}")
    phi = lookup(f"example47_{args.psi}")
    problem = cfg.problem(phi=phi, f=lookup("zero"), f_kind="continuous")
    u, rep = solve(problem, **_solve_kw(cfg))
    g = problem.grid
    exact = example47_exact(args.psi)(g.points(g.interior))
    err = float(np.max(np.abs(u.flat[g.interior] - exact)))
    meta = _meta(cfg, "example-ball") | {"psi": args.psi, "tol": rep.tol, "iterations": rep.iterations}
    write_field(out / "field.csv", u, meta)
    lo, hi = 2 * g.h, 0.5
    if not hi > lo:
        raise ValueError(f"fit range [2h, 0.5] is empty for grid.h = {g.h:g}; use grid.h < 0.25")
    curve = empirical_modulus(u, np.geomspace(lo, hi, cfg["analysis.t_points"]), cfg["analysis.pair_budget"],
                              cfg["analysis.seed"])
    write_modulus(out / "modulus.csv", curve.t, curve.omega, curve.majorant(curve.t), meta)
    fit = fit_exponent(curve, (lo, hi), cfg["analysis.pair_budget"])
    report = {"sup_error": err, "exponent": fit.slope, "fit": json.loads(fit.to_text()), "solver": rep.summary()}
    write_text(out / "example-report.json", json.dumps(report, indent=2, sort_keys=True))
    print(f"example-ball psi={args.psi}: sup error {err:.4e}, fitted exponent {fit.slope:.4f}")
    return EXIT_OK


_COMMANDS = {"solve": cmd_solve, "solve-lp": cmd_solve_lp, "barriers": cmd_barriers, "modulus": cmd_modulus,
             "exponent": cmd_exponent, "verify": cmd_verify, "example-ball": cmd_example_ball}

_DEFAULTS = {
    "example-ball": "n = 2\ndomain.kind = ball\nphi.name = example47_linear\nf.name = zero\ngrid.h = 0.1\n",
    None: "n = 2\ndomain.kind = ball\nphi.name = re_z1\nf.name = zero\ngrid.h = 0.2\n",
}


def build_parser() -> argparse.ArgumentParser:
    from .suites import SUITES

    p = argparse.ArgumentParser(prog="cmadir", description="Dirichlet problems for the complex Monge-Ampere "
                                "equation by a monotone wide-stencil scheme.")
    p.add_argument("--version", action="version", version=library_version())
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="configuration file (section.key = value lines)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one configuration key")
    common.add_argument("--output", "-o", help="output directory (overrides output.dir)")
    common.add_argument("--threads", type=int, default=0, help="cap on worker threads (0 = auto)")
    common.add_argument("--verbose", "-v", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("solve", "solve-lp", "barriers"):
        sub.add_parser(name, parents=[common])
    for name in ("modulus", "exponent"):
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument("--field", help="field CSV to analyse (default: solve the configured problem)")
        if name == "exponent":
            sp.add_argument("--t-min", type=float)
            sp.add_argument("--t-max", type=float)
    sv = sub.add_parser("verify", parents=[common])
    sv.add_argument("suite", choices=SUITES)
    se = sub.add_parser("example-ball", parents=[common])
    se.add_argument("--psi", choices=("linear", "sqrt"), default="linear")
    return p


def main(argv=None) -> int:
    from .barriers import BarrierError
    from .config import ConfigError
    from .domain import ResourceError
    from .solver import IllPosedError
    from .analysis import AnalysisInputError, FitError

    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    _set_threads(args.threads)
    args.default_config = _DEFAULTS.get(args.command, _DEFAULTS[None])
    t0 = time.perf_counter()
    try:
        cfg = _load_config(args)
        log.info("config %s", json.dumps(cfg.echo(), sort_keys=True, default=str))
        code = _COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except MemoryError as exc:
        print(f"resource cap: out of memory ({exc})", file=sys.stderr)
        return EXIT_RESOURCE
    except (FloatingPointError, IllPosedError, BarrierError, FitError, ArithmeticError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (AnalysisInputError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("%s finished in %.1f s", args.command, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
