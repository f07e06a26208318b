"""Explicit sub- and super-barriers and minimal concave majorants.

The lower barrier is the maximum over a finite boundary sample of functions
``v_xi = h_xi + K1 |z - z0|^2 - K2(xi)``, where ``h_xi`` is built from the
concave majorant of the boundary modulus of ``phi``:

    g(z)   = B rho(z) - |z - xi|^2
    chi(x) = -omega_bar((-x)^{1/2})
    h(z)   = chi(g(z)) + phi(xi)
    h_xi   = max(gamma1 (h - phi(xi)) + phi(xi), gamma2)   inside B(xi, r1)
           = gamma2                                        outside.

The upper barrier is minus the lower barrier of ``(-phi, f = 0)``. For
densities in ``L^p`` the lower barrier ``h1 + h2`` solves a zero-data problem
on a large ball and corrects the boundary values on the domain.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import norm, qmc

from .catalog import CatalogFunction, lookup, negate
from .domain import EXTERIOR, DomainSpec, ScalarField, bisect_crossings, interpolate_field, make_domain
from .solver import CHECK_SLACK, ProblemSpec, operator_defect, solve_lp

log = logging.getLogger(__name__)


class BarrierError(RuntimeError):
    """A barrier constant could not be found within its search budget."""


# ------------------------------------------------------------ majorants


@dataclass(frozen=True, eq=False)
class ModulusCurve:
    """Sampled modulus ``(t_i, omega_i)`` with its minimal concave majorant.

    ``t[0] = 0`` and ``omega[0] = 0``; the majorant is piecewise linear with
    breakpoints ``hull_t``/``hull_w`` and constant after the last one.
    """

    t: np.ndarray
    omega: np.ndarray
    hull_t: np.ndarray
    hull_w: np.ndarray

    @property
    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.t.tolist(), self.omega.tolist()))

    @property
    def length(self) -> float:
        return float(self.t[-1])

    def majorant(self, s) -> np.ndarray:
        return np.interp(np.asarray(s, dtype=float), self.hull_t, self.hull_w)

    def __call__(self, s) -> np.ndarray:
        """The sampled modulus, linearly interpolated (constant past the end)."""
        return np.interp(np.asarray(s, dtype=float), self.t, self.omega)

    def is_concave(self, tol: float = 1e-12) -> bool:
        slopes = np.diff(self.hull_w) / np.diff(self.hull_t)
        return bool(np.all(np.diff(slopes) <= tol * (1 + np.abs(slopes[:-1]))))

    def majorant_bound_violations(self, tol: float = 1e-10) -> list[tuple[float, float]]:
        """Pairs ``(t, eta t)`` of samples where ``omega_bar(eta t) > (1 + eta) omega(t)``.

        Holds for every subadditive modulus; sampled curves that are not
        subadditive can violate it.
        """
        bad = []
        t, w = self.t, self.omega
        wb = self.majorant(t)
        for i in range(1, t.size):
            eta = t / t[i]
            viol = (wb > (1 + eta) * w[i] + tol) & (t > 0)
            bad += [(float(t[i]), float(t[j])) for j in np.flatnonzero(viol)]
        return bad


def minimal_concave_majorant(samples) -> ModulusCurve:
    """Upper concave hull of ``(t, omega)`` samples joined to the origin.

    ``samples`` is a sequence of pairs or an array of shape ``(m, 2)``; ``t``
    must be increasing and ``omega`` nondecreasing and nonnegative.
    """
    arr = np.asarray(samples, dtype=float).reshape(-1, 2)
    t, w = arr[:, 0], arr[:, 1]
    if t.size == 0:
        raise ValueError("no samples")
    if np.any(np.diff(t) <= 0) or t[0] < 0:
        raise ValueError("sample abscissae must be nonnegative and strictly increasing")
    if np.any(np.diff(w) < 0):
        raise ValueError("modulus samples must be nondecreasing")
    if w[0] < 0:
        raise ValueError("modulus samples must be nonnegative")
    if t[0] == 0:
        if w[0] != 0:
            raise ValueError("a modulus vanishes at 0")
    else:
        t = np.concatenate([[0.0], t])
        w = np.concatenate([[0.0], w])
    hull: list[int] = []
    for k in range(t.size):
        while len(hull) >= 2:
            i, j = hull[-2], hull[-1]
            # drop j when it is on or below the chord i -> k
            cross = (t[j] - t[i]) * (w[k] - w[i]) - (w[j] - w[i]) * (t[k] - t[i])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(k)
    return ModulusCurve(t, w, t[hull].copy(), w[hull].copy())


# ------------------------------------------------------------ boundary sampling


def _sphere_directions(dim: int, count: int, seed: int) -> np.ndarray:
    pts = qmc.Halton(d=dim, scramble=True, seed=seed).random(count)
    g = norm.ppf(np.clip(pts, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def project_to_boundary(domain: DomainSpec, directions: np.ndarray, rho_tol: float = 1e-12) -> np.ndarray:
    """Boundary points hit by rays from the domain's reference point."""
    z0 = np.asarray(domain.center, dtype=float)
    m = directions.shape[0]
    t_max = np.full(m, 2.0 * domain.diameter + 1.0)
    t, ok = bisect_crossings(domain.rho, np.broadcast_to(z0, (m, z0.size)), directions, t_max, rho_tol, 200)
    if np.any(np.isnan(t)):
        raise BarrierError("a ray from the reference point never left the domain")
    return z0 + t[:, None] * directions


def boundary_sample(domain: DomainSpec, count: int = 200, seed: int = 0) -> np.ndarray:
    """Deterministic quasi-uniform boundary points (radial projection of Halton directions)."""
    if count < 1:
        raise ValueError("boundary sample needs at least one point")
    return project_to_boundary(domain, _sphere_directions(2 * domain.n, count, seed))


def sample_gap(domain: DomainSpec, xi: np.ndarray, dense: int = 20000, seed: int = 7) -> float:
    """Covering radius of ``xi`` in the boundary, estimated on a dense sample."""
    pts = boundary_sample(domain, dense, seed)
    d, _ = cKDTree(xi).query(pts)
    return float(d.max())


def boundary_modulus(domain: DomainSpec, phi, count: int = 2000, seed: int = 3, t_points: int = 48,
                     local_scales: int = 12) -> ModulusCurve:
    """Empirical boundary modulus of ``phi`` and its concave majorant.

    Pairs are all pairs of a quasi-uniform boundary sample plus, for every
    sample point, partners at geometrically shrinking distances (projected
    back to the boundary), so that small scales are represented.
    """
    d = domain.diameter
    base = boundary_sample(domain, count, seed)
    vals = np.asarray(phi(base), dtype=float)
    t_grid = np.concatenate([[0.0], np.geomspace(d * 1e-4, d, t_points)])
    best = np.zeros(t_grid.size)

    def absorb(dist, diff):
        k = np.searchsorted(t_grid, dist, side="left")
        ok = k < t_grid.size
        np.maximum.at(best, k[ok], diff[ok])

    for s in range(0, count, 256):
        e = min(count, s + 256)
        dist = np.linalg.norm(base[s:e, None, :] - base[None, :, :], axis=2)
        absorb(dist.ravel(), np.abs(vals[s:e, None] - vals[None, :]).ravel())
    rng = np.random.default_rng(seed)
    z0 = np.asarray(domain.center, dtype=float)
    for scale in np.geomspace(d * 1e-4, d * 0.25, local_scales):
        step = rng.standard_normal(base.shape)
        step *= scale / np.linalg.norm(step, axis=1, keepdims=True)
        dirs = base + step - z0
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        other = project_to_boundary(domain, dirs)
        absorb(np.linalg.norm(other - base, axis=1), np.abs(np.asarray(phi(other)) - vals))
    omega = np.maximum.accumulate(best)
    omega[0] = 0.0
    return minimal_concave_majorant(np.column_stack([t_grid, omega]))


# ------------------------------------------------------------ point barriers


@dataclass(eq=False)
class PointBarrier:
    """``h_xi`` for one boundary point, with the constants that define it."""

    xi: np.ndarray
    phi_xi: float
    B: float
    r: float
    r1: float
    gamma1: float
    gamma2: float
    omega_bar: ModulusCurve = field(repr=False)
    rho: object = field(repr=False)
    d: float = 0.0

    def chi(self, x) -> np.ndarray:
        x = np.clip(np.asarray(x, dtype=float), -self.d**2, 0.0)
        return -self.omega_bar.majorant(np.sqrt(-x))

    def g(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return self.B * self.rho(x) - np.sum((x - self.xi) ** 2, axis=1)

    def h(self, x) -> np.ndarray:
        return self.chi(self.g(x)) + self.phi_xi

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        inside = np.sum((x - self.xi) ** 2, axis=1) < self.r1**2
        out = np.full(x.shape[0], self.gamma2)
        if np.any(inside):
            lifted = self.gamma1 * (self.h(x[inside]) - self.phi_xi) + self.phi_xi
            out[inside] = np.maximum(lifted, self.gamma2)
        return out

    def constants(self) -> dict:
        return {"xi": self.xi.tolist(), "phi_xi": self.phi_xi, "B": self.B, "r": self.r, "r1": self.r1,
                "gamma1": self.gamma1, "gamma2": self.gamma2}

    def modulus_constant(self, lipschitz: float) -> float:
        """``C = 1 + (2d + B L)^{1/2}`` bounding the modulus of ``h_xi`` by ``C omega(t^{1/2})``."""
        return 1.0 + math.sqrt(2.0 * self.d + self.B * lipschitz)


def _ball_points(center: np.ndarray, radius: float, count: int, seed: int, shell: bool = False) -> np.ndarray:
    dirs = _sphere_directions(center.size, count, seed)
    if shell:
        return center + radius * dirs
    radii = radius * qmc.Halton(d=1, scramble=True, seed=seed + 1).random(count)[:, 0] ** (1.0 / center.size)
    return center + radii[:, None] * dirs


def point_barrier(domain: DomainSpec, phi, xi, omega_bar: ModulusCurve, gamma2: float, B: float | None = None,
                  r: float | None = None, r1: float | None = None, samples: int = 2000, seed: int = 11,
                  max_doublings: int = 60) -> PointBarrier:
    """Construct ``h_xi`` for the boundary data ``phi`` at the boundary point ``xi``.

    ``gamma2`` is the infimum of ``phi`` over the boundary. ``B`` defaults to
    ``2/c``; ``r`` is the largest of ``d, d/2, d/4, ...`` with ``|g| <= d^2``
    on sampled points of ``B(xi, r)`` in the domain; ``r1 = r/2``; ``gamma1``
    doubles from ``d/r1`` until the gluing condition holds on sampled points
    of ``dB(xi, r1)`` in the closed domain.
    """
    xi = np.asarray(xi, dtype=float)
    d = domain.diameter
    rho_tol = 1e-8 * max(1.0, d)
    if abs(float(domain.rho(xi[None, :])[0])) > rho_tol:
        raise BarrierError(f"point {xi.tolist()} is not on the boundary")
    if B is None:
        B = 2.0 / domain.c
    if B < 1.0 / domain.c:
        raise ValueError("B must be at least 1/c")
    phi_xi = float(np.asarray(phi(xi[None, :]))[0])
    bar = PointBarrier(xi, phi_xi, float(B), 0.0, 0.0, 0.0, float(gamma2), omega_bar, domain.rho, d)
    if r is None:
        r = d
        for _ in range(40):
            pts = _ball_points(xi, r, samples, seed)
            pts = pts[domain.rho(pts) < 0]
            if pts.size == 0 or np.max(np.abs(bar.g(pts))) <= d**2:
                break
            r *= 0.5
        else:
            raise BarrierError(f"no radius with |g| <= d^2 found around {xi.tolist()}")
    r1 = 0.5 * r if r1 is None else r1
    if not 0 < r1 < r + 1e-15:
        raise ValueError("need 0 < r1 < r")
    bar.r, bar.r1 = float(r), float(r1)
    shell = _ball_points(xi, r1, samples, seed + 2, shell=True)
    shell = shell[domain.rho(shell) <= 0]
    gamma1 = d / r1
    if shell.size:
        drop = bar.h(shell) - phi_xi           # <= 0
        for _ in range(max_doublings):
            if np.all(gamma1 * drop + phi_xi <= gamma2 + 1e-14 * max(1.0, abs(gamma2))):
                break
            gamma1 *= 2.0
        else:
            raise BarrierError(f"gluing condition unachievable at xi = {xi.tolist()}")
    bar.gamma1 = float(gamma1)
    return bar


# ------------------------------------------------------------ domain barriers


@dataclass(eq=False)
class BarrierBundle:
    """Lower and upper barriers on a problem's grid.

    ``sub`` and ``super`` follow the solver convention: interior nodes carry
    the barrier values and boundary-band nodes carry ``phi``. ``super`` stores
    the upper barrier itself (``-w`` in the notation where ``w`` is psh).
    ``raw_sub``/``raw_super`` hold the barrier formulas at every used node.
    """

    sub: ScalarField
    super: ScalarField
    provenance: str
    constants: dict
    raw_sub: np.ndarray = field(repr=False, default=None)
    raw_super: np.ndarray = field(repr=False, default=None)

    def sandwich(self, u: ScalarField, tol: float) -> dict:
        idx = u.grid.interior
        lo = float(np.max(self.sub.flat[idx] - u.flat[idx]))
        hi = float(np.max(u.flat[idx] - self.super.flat[idx]))
        return {"sub_minus_u": lo, "u_minus_super": hi, "tol": tol, "pass": lo <= tol and hi <= tol}

    def report(self) -> str:
        return json.dumps({"provenance": self.provenance, **self.constants}, indent=2, sort_keys=True,
                          default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    return str(o)


@dataclass(eq=False)
class SubBarrier:
    """Evaluable lower barrier ``v = K1 |z - z0|^2 + max(m, max_xi [...])``."""

    bars: list
    K1: float
    z0: np.ndarray
    base: float
    K2: np.ndarray

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        best = np.full(x.shape[0], self.base)
        for bar, k2 in zip(self.bars, self.K2):
            d2 = np.sum((x - bar.xi) ** 2, axis=1)
            near = d2 < bar.r1**2
            if np.any(near):
                val = bar.gamma1 * (bar.h(x[near]) - bar.phi_xi) + bar.phi_xi - k2
                best[near] = np.maximum(best[near], val)
        return best + self.K1 * np.sum((x - self.z0) ** 2, axis=1)


def build_sub_barrier(problem: ProblemSpec, phi=None, f_zero: bool = False, xi_count: int = 200,
                      seed: int = 0, B: float | None = None) -> tuple[SubBarrier, dict]:
    """Evaluable lower barrier for ``(phi, f)`` (``f = 0`` when ``f_zero``)."""
    dom = problem.domain
    phi = problem.phi if phi is None else phi
    z0 = np.asarray(dom.center, dtype=float)
    if f_zero:
        K1 = 0.0
    else:
        froot = problem.f_root()
        K1 = float(froot.max(initial=0.0))

    def shifted(x):
        x = np.atleast_2d(x)
        return np.asarray(phi(x), dtype=float) - K1 * np.sum((x - z0) ** 2, axis=1)

    xi = boundary_sample(dom, xi_count, seed)
    omega_bar = boundary_modulus(dom, shifted)
    dense = boundary_sample(dom, 20000, seed + 7)
    base = float(np.min(shifted(dense)))
    base = min(base, float(np.min(shifted(xi))))
    # the scheme sees phi at the stencil's boundary crossings; the floor must not exceed it there
    cross = problem.tables.crossing_points()
    for s in range(0, cross.shape[0], 1 << 18):
        base = min(base, float(np.min(shifted(cross[s:s + (1 << 18)]), initial=np.inf)))
    K2 = K1 * np.sum((xi - z0) ** 2, axis=1)
    bars = []
    for k in range(xi.shape[0]):
        # data phi - K1|z-z0|^2 + K2 has infimum base + K2 and value phi(xi) at xi
        sh = _Shifted(shifted, float(K2[k]))
        bars.append(point_barrier(dom, sh, xi[k], omega_bar, base + float(K2[k]), B=B, seed=11 + k))
    gap = sample_gap(dom, xi)
    consts = {"K1": K1, "z0": z0.tolist(), "xi_count": int(xi.shape[0]), "sample_gap": gap,
              "gamma2_base": base, "B": bars[0].B if bars else B,
              "r": [b.r for b in bars], "r1": [b.r1 for b in bars], "gamma1": [b.gamma1 for b in bars],
              "gamma2": [b.gamma2 for b in bars], "omega_bar_breakpoints": np.column_stack(
                  [omega_bar.hull_t, omega_bar.hull_w]).tolist()}
    return SubBarrier(bars, K1, z0, base, K2), consts


class _Shifted:
    def __init__(self, fn, k2: float):
        self.fn, self.k2 = fn, k2

    def __call__(self, x):
        return self.fn(x) + self.k2


def _on_grid(problem: ProblemSpec, fn) -> tuple[np.ndarray, np.ndarray]:
    g = problem.grid
    used = np.flatnonzero(g.klass.reshape(-1) != EXTERIOR)
    raw = np.full(g.size, np.nan)
    for s in range(0, used.size, 1 << 18):
        sl = used[s:s + (1 << 18)]
        raw[sl] = fn(g.points(sl))
    frozen = problem.phi_band()
    frozen[g.interior] = raw[g.interior]
    return raw, frozen


def sub_barrier(problem: ProblemSpec, xi_count: int = 200, seed: int = 0, B: float | None = None,
                check: bool = True) -> tuple[ScalarField, dict]:
    """Lower barrier sampled on the grid with its constants and subsolution check."""
    v, consts = build_sub_barrier(problem, xi_count=xi_count, seed=seed, B=B)
    raw, vals = _on_grid(problem, v)
    if check:
        defect = operator_defect(problem, vals)
        slack = CHECK_SLACK * max(1.0, float(problem.f_root().max(initial=0.0)))
        consts["subsolution_defect_min"] = float(defect.min(initial=0.0))
        consts["subsolution_failures"] = int(np.sum(defect < -slack))
        consts["is_subsolution"] = bool(np.all(defect >= -slack))
    field_ = ScalarField(problem.grid, vals, "sub_barrier")
    field_.raw = raw  # type: ignore[attr-defined]
    return field_, consts


def super_barrier(problem: ProblemSpec, xi_count: int = 200, seed: int = 0, B: float | None = None) -> tuple[ScalarField, dict]:
    """Upper barrier ``-v1`` with ``v1`` the lower barrier of ``(-phi, 0)``."""
    v1, consts = build_sub_barrier(problem, phi=negate(problem.phi) if isinstance(problem.phi, CatalogFunction)
                                   else (lambda x: -np.asarray(problem.phi(x))), f_zero=True,
                                   xi_count=xi_count, seed=seed, B=B)
    raw, vals = _on_grid(problem, lambda x: -v1(x))
    field_ = ScalarField(problem.grid, vals, "super_barrier")
    field_.raw = raw  # type: ignore[attr-defined]
    return field_, consts


def barrier_bundle(problem: ProblemSpec, xi_count: int = 200, seed: int = 0, B: float | None = None) -> BarrierBundle:
    """Lower and upper barriers from the boundary-point construction."""
    sub, c_sub = sub_barrier(problem, xi_count, seed, B)
    sup, c_sup = super_barrier(problem, xi_count, seed, B)
    return BarrierBundle(sub, sup, "point-barrier", {"sub": c_sub, "super": c_sup},
                         getattr(sub, "raw", None), getattr(sup, "raw", None))


def composite_barrier_lp(problem: ProblemSpec, ladder, ball_scale: float = 2.0, tol: float | None = None,
                         xi_count: int = 200, seed: int = 0, **solve_kw) -> BarrierBundle:
    """Lower barrier ``h1 + h2`` for densities in ``L^p``.

    ``h1`` solves the zero-data problem on a ball ``ball_scale`` times the
    circumradius (same centre, grid spacing and directions) with ``f``
    extended by zero; ``h2`` solves ``(phi - h1, 0)`` on the domain. The upper
    barrier is :func:`super_barrier`.
    """
    dom = problem.domain
    if ball_scale <= 1.0:
        raise ValueError("the big ball must strictly contain the domain")
    big = make_domain("ball", dom.n, center=_complex_center(dom), radius=ball_scale * dom.circumradius)
    f = problem.f

    def f_ext(x):
        x = np.atleast_2d(x)
        inside = dom.rho(x) < 0
        out = np.zeros(x.shape[0])
        if np.any(inside):
            with np.errstate(divide="ignore"):
                out[inside] = f(x[inside])
        return out

    f_ext.singular = (lambda x: (dom.rho(np.atleast_2d(x)) < 0) & f.singular(np.atleast_2d(x))) \
        if getattr(f, "singular", None) is not None else None
    if f_ext.singular is None:
        del f_ext.singular
    outer = ProblemSpec(big, lookup("zero"), f_ext, problem.directions, problem.grid_h, problem.arm_scale,
                        f_kind="lp" if problem.f_kind == "lp" else "continuous", p=problem.p)
    if problem.f_kind == "lp":
        h1, gaps, _ = solve_lp(outer, ladder, tol=tol, **solve_kw)
    else:
        from .solver import solve
        h1, _ = solve(outer, tol=tol, **solve_kw)
        gaps = []
    phi = problem.phi

    def corrected(x):
        return np.asarray(phi(x), dtype=float) - interpolate_field(h1, x)

    inner = problem.with_data(phi=corrected, f=lookup("zero"), f_kind="continuous")
    from .solver import solve
    h2, _ = solve(inner, tol=tol, **solve_kw)
    g = problem.grid
    used = np.flatnonzero(g.klass.reshape(-1) != EXTERIOR)
    h1_here = np.full(g.size, np.nan)
    h1_here[used] = interpolate_field(h1, g.points(used))
    raw = h1_here + h2.flat
    vals = problem.phi_band()
    vals[g.interior] = raw[g.interior]
    sub = ScalarField(g, vals, "composite_sub_barrier")
    sup, c_sup = super_barrier(problem, xi_count, seed)
    consts = {"ball_radius": big.params.get("radius"), "ladder": [float(m) for m in ladder], "h1_gaps": gaps,
              "super": c_sup}
    return BarrierBundle(sub, sup, "composite", consts, raw, getattr(sup, "raw", None))


def _complex_center(dom: DomainSpec) -> list:
    c = np.asarray(dom.center, dtype=float)
    return [complex(c[2 * k], c[2 * k + 1]) for k in range(dom.n)]
