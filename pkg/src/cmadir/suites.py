"""Verification suites shared by ``cmadir verify`` and the test-suite.

Each suite returns an :class:`~cmadir.analysis.Verdict`. Suites that need a
problem take a :class:`~cmadir.solver.ProblemSpec` (or build the default one
on the unit ball).
"""

from __future__ import annotations

import logging
import math
import time

import numpy as np

from .analysis import (Verdict, ball_volume, empirical_modulus, laplacian_mass, mass_comparison,
                       modulus_bound_check, stability_check, theorem_a_verdict, fit_exponent, default_t_grid,
                       FitError, _sup_root_f)
from .barriers import barrier_bundle
from .catalog import lookup
from .domain import ScalarField, make_domain, sample_field
from .hermitian import DEFAULT_LADDER, build_direction_set, gaveau_inf
from .solver import ProblemSpec, default_tol, initial_subsolution, solve, solve_lp

log = logging.getLogger(__name__)

SUITES = ("gaveau", "equivalence", "comparison", "stability", "mass", "theorem-a", "theorem-b")


def random_psd(n: int, rng: np.random.Generator, max_cond: float = 10.0) -> np.ndarray:
    """Random Hermitian positive definite matrix with condition number <= ``max_cond``."""
    Z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    U, _ = np.linalg.qr(Z)
    eig = np.exp(rng.uniform(0.0, math.log(max_cond), n))
    eig[0], eig[-1] = 1.0, max(eig[-1], 1.0)
    eig = np.clip(eig, 1.0, max_cond)
    scale = np.exp(rng.uniform(-1.0, 1.0))
    return scale * (U * eig) @ U.conj().T


def det_root(Q: np.ndarray) -> float:
    """``det(Q)^{1/n}`` via a Cholesky factorisation (independent of the direction machinery)."""
    L = np.linalg.cholesky(Q)
    n = Q.shape[0]
    return float(np.exp(2.0 * np.sum(np.log(np.abs(np.diag(L)))) / n))


def gaveau_suite(cases: int = 100, dims=(2, 3), frames: int = 64, ladder=DEFAULT_LADDER, seed: int = 0,
                 upper: float = 1.05, lower_tol: float = 1e-10) -> Verdict:
    """Random psd Hessians against ``min_{H in D} tr(HQ)``: hard lower bound, 5 % upper bound."""
    t0 = time.perf_counter()
    worst = {}
    lower_ok = upper_ok = True
    for n in dims:
        D = build_direction_set(n, frames, ladder, seed)
        rng = np.random.default_rng(seed + n)
        ratios = []
        for _ in range(cases):
            Q = random_psd(n, rng)
            exact = det_root(Q)
            val = gaveau_inf(Q, D)
            ratios.append(val / exact)
            lower_ok &= val >= exact - lower_tol * max(1.0, exact)
        r = np.asarray(ratios)
        upper_ok &= bool(r.max() <= upper)
        worst[f"n{n}"] = {"min_ratio": float(r.min()), "max_ratio": float(r.max()),
                          "fraction_within_upper": float(np.mean(r <= upper))}
    return Verdict("gaveau", bool(lower_ok and upper_ok),
                   {"lower_bound_holds": bool(lower_ok), "upper_bound_holds": bool(upper_ok), "upper": upper,
                    "cases_per_dimension": cases, "frames": frames, "ladder": list(ladder), "ratios": worst,
                    "seconds": time.perf_counter() - t0})


def _smooth_psh_hessian(z: np.ndarray, Q0: np.ndarray) -> np.ndarray:
    # u = z^* Q0 z + |z_1|^4 + exp(Re z_n):  Q_u = Q0 + diag(4|z_1|^2, ..., exp(Re z_n)/4)
    n = Q0.shape[0]
    Q = Q0.astype(complex).copy()
    Q[0, 0] += 4.0 * abs(z[0]) ** 2
    Q[n - 1, n - 1] += 0.25 * math.exp(z[n - 1].real)
    return Q


def equivalence_suite(n: int = 2, points: int = 200, frame_counts=(4, 16, 64), seed: int = 0) -> Verdict:
    """Sampled psh equivalence: ``min_D tr(H Q_u) >= det(Q_u)^{1/n}`` and the gap shrinks as D refines."""
    rng = np.random.default_rng(seed)
    sets = [build_direction_set(n, F, DEFAULT_LADDER, seed) for F in frame_counts]
    lower_ok, mono_ok = True, True
    gaps = np.zeros((points, len(sets)))
    for i in range(points):
        Q0 = random_psd(n, rng)
        z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        Q = _smooth_psh_hessian(z, Q0)
        exact = det_root(Q)
        vals = [gaveau_inf(Q, D) for D in sets]
        gaps[i] = np.asarray(vals) / exact - 1.0
        lower_ok &= all(v >= exact - 1e-10 * max(1.0, exact) for v in vals)
        mono_ok &= all(b <= a + 1e-12 * max(1.0, abs(a)) for a, b in zip(vals, vals[1:]))
    mean_gap = gaps.mean(axis=0)
    return Verdict("equivalence", bool(lower_ok and mono_ok),
                   {"lower_bound_holds": bool(lower_ok), "refinement_monotone": bool(mono_ok),
                    "frame_counts": list(frame_counts), "mean_relative_gap": mean_gap,
                    "max_relative_gap": gaps.max(axis=0)})


def default_problem(h: float = 0.2, phi=None, f=None, frames: int = 8, n: int = 2, **kw) -> ProblemSpec:
    dom = make_domain("ball", n)
    return ProblemSpec(dom, phi or lookup("re_z1"), f or lookup("zero"), build_direction_set(n, frames), h, **kw)


def comparison_suite(problem: ProblemSpec, tol: float | None = None, xi_count: int = 200, seed: int = 0,
                     solved=None, bundle=None, pair_budget: int = 200_000, **solve_kw) -> Verdict:
    """Barrier sandwich, subsolution comparison and the modulus bound built from the barriers."""
    u, rep = solved if solved is not None else solve(problem, tol=tol, **solve_kw)
    tol = rep.tol
    bundle = bundle or barrier_bundle(problem, xi_count, seed)
    idx = problem.grid.interior
    slack = tol + rep.consistency_slack
    sandwich = bundle.sandwich(u, slack)
    v0 = initial_subsolution(problem)
    v0_gap = float(np.max(v0.flat[idx] - u.flat[idx]))
    t = default_t_grid(problem.grid_h, problem.domain.diameter)
    wu = empirical_modulus(u, t, pair_budget, seed)
    wv = empirical_modulus(bundle.sub, t, pair_budget, seed)
    ww = empirical_modulus(bundle.super, t, pair_budget, seed)
    _, froot = _sup_root_f(problem)
    wf = empirical_modulus(froot, t, pair_budget, seed)
    mod = modulus_bound_check(wu, wv, ww, wf, problem.domain.diameter, tol)
    passed = sandwich["pass"] and v0_gap <= slack and mod.passed
    return Verdict("comparison", bool(passed),
                   {"sandwich": sandwich, "initial_subsolution_minus_u": v0_gap, "slack": slack,
                    "modulus_bound": mod.passed, "modulus_rhs_min_margin": float(np.min(mod.numbers["rhs"] - wu.omega)),
                    "barrier_constants": bundle.constants, "solver": rep.summary()})


def smooth_data(seed: int, n: int = 2):
    """Seeded smooth boundary data and nonnegative density (quadratic polynomials)."""
    rng = np.random.default_rng(seed)
    dim = 2 * n
    terms_phi = [(float(rng.normal()),)]
    terms_f = [(float(rng.uniform(0.5, 1.5)),)]
    for k in range(dim):
        e = [0] * dim
        e[k] = 1
        terms_phi.append((float(rng.normal()), *e))
        e2 = [0] * dim
        e2[k] = 2
        terms_phi.append((float(rng.normal(scale=0.5)), *e2))
        terms_f.append((float(rng.uniform(0.0, 0.5)), *e2))
    return lookup("poly", terms=terms_phi), lookup("poly", terms=terms_f)


def stability_suite(base: ProblemSpec | None = None, seeds=range(5), shift: float = 0.25, tol: float | None = None,
                    **solve_kw) -> Verdict:
    """Seeded smooth pairs against the sup-norm stability bound, plus the exact constant shift."""
    base = base or default_problem()
    rows = []
    ok = True
    for s in seeds:
        phi1, f1 = smooth_data(2 * s, base.n)
        phi2, f2 = smooth_data(2 * s + 1, base.n)
        v = stability_check(base.with_data(phi=phi1, f=f1), base.with_data(phi=phi2, f=f2), tol=tol, **solve_kw)
        rows.append({"seed": s, "pass": v.passed, "lhs": v.numbers["lhs"], "rhs": v.numbers["rhs"],
                     "eps": v.numbers["eps_disc"], "ratio_Ln_L1": v.numbers["Ln_L1_ratio"]})
        ok &= v.passed
    phi, f = smooth_data(100, base.n)
    p1 = base.with_data(phi=phi, f=f)
    shifted = lookup("poly", terms=[list(t) for t in phi.params["terms"]] + [[shift]])
    p2 = base.with_data(phi=shifted, f=f)
    # the default tolerance grows with |phi|; one shared stopping rule keeps the identity exact
    shared_tol = default_tol(p1) if tol is None else tol
    u1, r1 = solve(p1, tol=shared_tol, **solve_kw)
    u2, r2 = solve(p2, tol=shared_tol, **solve_kw)
    idx = base.grid.interior
    d = u2.flat[idx] - u1.flat[idx]
    shift_err = float(np.max(np.abs(d - shift)))
    shift_ok = shift_err <= 1e-8
    return Verdict("stability", bool(ok and shift_ok),
                   {"pairs": rows, "shift": shift, "shift_error": shift_err, "shift_pass": shift_ok})


def mass_suite(problem: ProblemSpec, tol: float | None = None, xi_count: int = 200, seed: int = 0,
               solved=None, sub=None, quad_h: float | None = None, **solve_kw) -> Verdict:
    """Laplacian-mass comparison for (sub-barrier, U) plus the |z|^2 mass against 8 vol."""
    from .barriers import sub_barrier

    u, rep = solved if solved is not None else solve(problem, tol=tol, **solve_kw)
    v = sub if sub is not None else sub_barrier(problem, xi_count, seed)[0]
    notes = []
    try:
        mc = mass_comparison(u, v, rep.tol + rep.consistency_slack)
        cmp_ok, cmp_numbers = mc.passed, mc.numbers
    except ValueError as exc:
        cmp_ok, cmp_numbers = False, {"error": str(exc)}
        notes.append(f"mass comparison precondition failed: {exc}")
    q = quadratic_mass_check(quad_h or problem.grid_h, problem.n)
    return Verdict("mass", bool(cmp_ok and q.passed), {"comparison": cmp_numbers, "quadratic": q.numbers}, notes)


def quadratic_mass_check(h: float = 0.1, n: int = 2, rel: float = 0.05) -> Verdict:
    """Cross-stencil mass of ``|z|^2`` on the unit ball against ``4n * vol``."""
    dom = make_domain("ball", n)
    from .domain import build_grid

    g = build_grid(dom, h, reach=1)
    u = sample_field(g, lambda x: np.einsum("ij,ij->i", x, x))
    mass = laplacian_mass(u)
    exact = 2.0 * (2 * n) * ball_volume(2 * n)
    err = abs(mass - exact) / exact
    return Verdict("quadratic-mass", err <= rel, {"mass": mass, "exact": exact, "relative_error": err, "h": h})


def theorem_a_suite(problem: ProblemSpec, tol: float | None = None, eta_cap: float = 1e3, pair_budget: int = 2_000_000,
                    seed: int = 0, solved=None, **solve_kw) -> Verdict:
    u, rep = solved if solved is not None else solve(problem, tol=tol, **solve_kw)
    v = theorem_a_verdict(u, problem, pair_budget=pair_budget, seed=seed, eta_cap=eta_cap)
    v.numbers["solver"] = rep.summary()
    return v


def theorem_b_suite(problem: ProblemSpec, ladder=(4.0, 16.0, 64.0), tol: float | None = None,
                    pair_budget: int = 2_000_000, seed: int = 0, slack: float = 0.1, result=None, **solve_kw) -> Verdict:
    """Truncation ladder for an ``L^p`` density: gaps strictly decrease and the exponent clears ``1/(nq+1) - slack``."""
    if problem.p is None or not problem.p > 1:
        raise ValueError("the L^p suite needs p > 1")
    if result is None:
        top, gaps, res = solve_lp(problem, ladder, tol=tol, **solve_kw)
    else:
        top, gaps, res = result
    decreasing = all(b < a for a, b in zip(gaps, gaps[1:]))
    q = problem.p / (problem.p - 1.0)
    lower = 1.0 / (problem.n * q + 1.0)
    g = problem.grid
    lo, hi = 2 * g.h, 0.2 * problem.domain.diameter
    if not hi > lo:
        raise FitError(f"empty fit range [{lo:g}, {hi:g}]; refine the grid")
    curve = empirical_modulus(top, np.geomspace(lo, hi, 24), pair_budget, seed)
    fit = fit_exponent(curve, (lo, hi), pair_budget)
    ok = decreasing and fit.slope >= lower - slack
    return Verdict("theorem-b", bool(ok), {"ladder": list(ladder), "gaps": gaps, "gaps_decreasing": decreasing,
                                           "q": q, "exponent_lower": lower, "threshold": lower - slack,
                                           "slope": fit.slope, "fit_residual": fit.residual,
                                           "violations": [r.monotonicity_violations for r in res.reports]})
