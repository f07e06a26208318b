"""Monotone envelope solver for the discrete Dirichlet problem.

The discrete equation at an interior node is ``min_{H in D} Delta_H u = f^{1/n}``.
Starting from an explicit subsolution, every node is repeatedly replaced by
the smallest of the per-direction values that would satisfy the equation with
its neighbours frozen. Each replacement is nondecreasing in the neighbours, so
the iterates increase monotonically towards the largest discrete subsolution,
the discrete counterpart of the Perron-Bremermann envelope.
"""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .domain import EXTERIOR, INTERIOR, DomainSpec, Grid, ScalarField, build_grid
from .hermitian import DirectionSet
from .stencil import (StencilTables, get_tables, gs_sweep, jacobi_sweep, kernel_args, min_operator,
                      node_values)

log = logging.getLogger(__name__)

GAUSS_SEIDEL = "gauss_seidel"
JACOBI = "jacobi"
_MODES = {"gauss_seidel": GAUSS_SEIDEL, "gs": GAUSS_SEIDEL, "gaussseidellex": GAUSS_SEIDEL,
          "jacobi": JACOBI}

A_CAP = 1e12
# operator-units slack tolerated when certifying a subsolution (rounding only)
CHECK_SLACK = 1e-10


class IllPosedError(ValueError):
    """The subsolution constant ran away; the domain constant is probably wrong."""


@dataclass(eq=False)
class ProblemSpec:
    """Dirichlet data ``(domain, phi, f)`` plus discretisation parameters.

    ``phi`` is evaluated on a neighbourhood of the boundary (band nodes and
    boundary crossings); ``f`` at interior nodes. For ``f_kind = "lp"`` the
    density may be infinite at points flagged by ``f.singular`` (or wherever
    it evaluates to ``inf``); those points take the truncation level.

    ``f_cells > 0`` replaces node values of ``f`` by averages over the node's
    grid cell with ``f_cells`` Gauss points per axis (truncation applied
    pointwise first). L^p densities default to 4 points: point samples at a
    singularity equal the truncation level itself, so the ladder would not
    settle as the level grows.
    """

    domain: DomainSpec
    phi: Callable
    f: Callable
    directions: DirectionSet
    grid_h: float
    arm_scale: float = 2.0
    f_kind: str = "continuous"
    p: float | None = None
    truncation: float | None = None
    margin: float | None = None
    node_budget: int | None = None
    f_cells: int | None = None
    _grid: Grid | None = field(default=None, repr=False)
    _froot: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.f_kind not in ("continuous", "lp"):
            raise ValueError(f"unknown density kind {self.f_kind!r}")
        if self.f_kind == "lp" and not (self.p is not None and self.p > 1):
            raise ValueError("an L^p density needs p > 1")
        if self.directions.n != self.domain.n:
            raise ValueError("direction set dimension differs from the domain dimension")
        if not self.arm_scale > 0:
            raise ValueError("arm scale must be positive")
        if self.f_cells is None:
            self.f_cells = 4 if self.f_kind == "lp" else 0
        if self.f_cells < 0:
            raise ValueError("f_cells must be >= 0")

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def reach(self) -> int:
        return int(math.ceil(self.arm_scale - 1e-12))

    @property
    def grid(self) -> Grid:
        if self._grid is None:
            kw = {} if self.node_budget is None else {"node_budget": self.node_budget}
            self._grid = build_grid(self.domain, self.grid_h, margin=self.margin, reach=self.reach, **kw)
        return self._grid

    @property
    def tables(self) -> StencilTables:
        return get_tables(self.grid, self.directions, self.arm_scale)

    def with_data(self, phi=None, f=None, truncation=None, f_kind=None) -> "ProblemSpec":
        """Same domain, grid and directions with other data."""
        return replace(self, phi=self.phi if phi is None else phi, f=self.f if f is None else f,
                       truncation=truncation, f_kind=self.f_kind if f_kind is None else f_kind)

    def truncated(self, level: float) -> "ProblemSpec":
        """The continuous problem with ``f_M = min(f, M)``."""
        return self.with_data(truncation=float(level), f_kind="continuous")

    # sampled data -------------------------------------------------------

    def phi_band(self) -> np.ndarray:
        """``phi`` at all non-exterior nodes (flat, NaN at exterior nodes)."""
        g = self.grid
        out = np.full(g.size, np.nan)
        used = np.flatnonzero(g.klass.reshape(-1) != EXTERIOR)
        vals = np.asarray(self.phi(g.points(used)), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("boundary data is not finite on the boundary band")
        out[used] = vals
        return out

    def f_values(self) -> np.ndarray:
        """``f`` at interior nodes (or cell averages), truncated when a level is set."""
        g = self.grid
        pts = g.points(g.interior)
        if self.f_cells:
            nodes, weights = np.polynomial.legendre.leggauss(self.f_cells)
            offs = np.array(list(itertools.product(0.5 * g.h * nodes, repeat=pts.shape[1])))
            wts = np.prod(np.array(list(itertools.product(0.5 * weights, repeat=pts.shape[1]))), axis=1)
            wts = wts / wts.sum()
            out = np.empty(pts.shape[0])
            chunk = max(1, (1 << 21) // offs.shape[0])
            for s in range(0, pts.shape[0], chunk):
                sub = pts[s:s + chunk]
                vals = self._point_f((sub[:, None, :] + offs[None]).reshape(-1, pts.shape[1]))
                out[s:s + chunk] = vals.reshape(sub.shape[0], -1) @ wts
            return out
        return self._point_f(pts)

    def _point_f(self, pts: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.asarray(self.f(pts), dtype=float)
        sing = np.isinf(vals)
        flagger = getattr(self.f, "singular", None)
        if flagger is not None:
            sing |= np.asarray(flagger(pts), dtype=bool)
        if self.truncation is not None:
            vals = np.where(sing, self.truncation, np.minimum(vals, self.truncation))
        elif np.any(sing) or not np.all(np.isfinite(vals)):
            if self.f_kind == "lp":
                raise ValueError("an L^p density has to be solved through a truncation ladder (solve_lp)")
            raise FloatingPointError("density is not finite at an interior node")
        if np.any(np.isnan(vals)):
            raise FloatingPointError("density is NaN at an interior node")
        if np.any(vals < 0):
            if vals.min() < -1e-12:
                raise ValueError("density must be nonnegative")
            vals = np.maximum(vals, 0.0)
        return vals

    def f_root(self) -> np.ndarray:
        """``f^{1/n}`` at interior nodes (computed once per problem)."""
        if self._froot is None:
            self._froot = self.f_values() ** (1.0 / self.n)
            self._froot.setflags(write=False)
        return self._froot


@dataclass
class SolverReport:
    iterations: int
    final_residual: float
    monotonicity_violations: int
    sup_update_history: list
    wall_time: float
    converged: bool
    tol: float
    tol_residual: float
    update_residual: float = 0.0
    sweep_mode: str = GAUSS_SEIDEL
    A: float = 0.0
    epsilon: float = 0.0
    directions: str = ""
    n_interior: int = 0

    @property
    def non_converged(self) -> bool:
        return not self.converged

    @property
    def consistency_slack(self) -> float:
        """Largest change one more exact sweep would make (value units)."""
        return self.update_residual

    def history_nonincreasing(self, skip: int = 10) -> bool:
        h = self.sup_update_history[skip:]
        return all(b <= a * (1 + 1e-12) for a, b in zip(h, h[1:]))

    def summary(self) -> dict:
        return {"iterations": self.iterations, "converged": self.converged, "final_residual": self.final_residual,
                "update_residual": self.update_residual, "monotonicity_violations": self.monotonicity_violations,
                "wall_time": self.wall_time, "tol": self.tol, "tol_residual": self.tol_residual,
                "sweep_mode": self.sweep_mode, "A": self.A, "epsilon": self.epsilon,
                "directions": self.directions, "n_interior": self.n_interior}


def default_tol(problem: ProblemSpec) -> float:
    phi = problem.phi_band()
    return 1e-8 * (1.0 + float(np.nanmax(np.abs(phi))))


def default_tol_residual(problem: ProblemSpec, tol: float) -> float:
    lam_sum = float(problem.directions.dir_lam.sum(axis=1).max())
    delta = problem.arm_scale * problem.grid_h
    return 10.0 * tol * lam_sum / delta**2


def _field_with_band(problem: ProblemSpec, interior_values: np.ndarray, phi_band: np.ndarray) -> np.ndarray:
    u = phi_band.copy()
    u[problem.grid.interior] = interior_values
    return u


def operator_defect(problem: ProblemSpec, values) -> np.ndarray:
    """``min_H Delta_H v - f^{1/n}`` at interior nodes (band values as given)."""
    tab = problem.tables
    out, _ = min_operator(tab, np.asarray(values, dtype=float).reshape(-1), problem.phi)
    return out - problem.f_root()


def is_subsolution(problem: ProblemSpec, values, slack: float = CHECK_SLACK) -> bool:
    """Discrete subsolution test with band values ``<= phi``."""
    v = np.asarray(values, dtype=float).reshape(-1)
    band = problem.grid.band
    if np.any(v[band] > problem.phi_band()[band] + 1e-12):
        return False
    scale = max(1.0, float(np.max(problem.f_root(), initial=0.0)))
    return bool(np.all(operator_defect(problem, v) >= -slack * scale))


def boundary_oscillation(problem: ProblemSpec) -> float:
    """Largest change of ``phi`` between band nodes at most ``reach`` cells apart along an axis."""
    g = problem.grid
    phi = problem.phi_band().reshape(g.shape)
    band = g.klass == 1
    best = 0.0
    for ax in range(len(g.shape)):
        for lag in range(1, g.reach + 1):
            a = [slice(None)] * len(g.shape)
            b = [slice(None)] * len(g.shape)
            a[ax] = slice(0, -lag)
            b[ax] = slice(lag, None)
            both = band[tuple(a)] & band[tuple(b)]
            if np.any(both):
                diff = np.abs(phi[tuple(a)] - phi[tuple(b)])[both]
                best = max(best, float(diff.max()))
    return best


def initial_subsolution(problem: ProblemSpec, return_constants: bool = False):
    """``v0 = A (rho - kappa) + phi - eps`` with ``A`` doubled until the discrete check passes.

    ``eps`` is the oscillation of ``phi`` over the stencil reach and the
    starting ``A`` is ``(sup f^{1/n} + max(0, -min_H Delta_H phi)) / c``, the
    second term compensating for the failure of ``phi`` to be psh.
    ``kappa = max(0, max rho over band nodes)`` keeps the smooth function
    below the frozen band values; without it the band corners of the
    interpolation cells can spoil the convexity of ``A rho`` for every ``A``.
    """
    dom = problem.domain
    if not dom.c > 0:
        raise IllPosedError("the initial subsolution needs a positive domain constant c")
    g = problem.grid
    idx = g.interior
    phi = problem.phi_band()
    froot = problem.f_root()
    rho = dom.rho(g.points(idx))
    kappa = max(0.0, float(np.max(dom.rho(g.points(g.band)), initial=0.0)))
    rho = rho - kappa
    eps = boundary_oscillation(problem)
    tab = problem.tables
    dphi, _ = min_operator(tab, phi, problem.phi)
    slack_g = max(0.0, -float(dphi.min(initial=0.0)))
    A = (float(froot.max(initial=0.0)) + slack_g) / dom.c
    scale = max(1.0, float(froot.max(initial=0.0)))
    while True:
        v = _field_with_band(problem, A * rho + phi[idx] - eps, phi)
        out, _ = min_operator(tab, v, problem.phi)
        if np.all(out - froot >= -CHECK_SLACK * scale):
            break
        A = 2.0 * A if A > 0 else 1.0 / dom.c
        if A > A_CAP:
            raise IllPosedError(f"subsolution constant exceeded {A_CAP:g}; is the domain constant c right?")
    log.debug("initial subsolution A=%g eps=%g kappa=%g", A, eps, kappa)
    field_ = ScalarField(g, np.where(g.klass.reshape(-1) == EXTERIOR, np.nan, v),
                         f"initial_subsolution A={A!r} eps={eps!r} kappa={kappa!r}")
    if return_constants:
        return field_, {"A": A, "epsilon": eps, "kappa": kappa}
    return field_


def node_update(u: ScalarField, z, problem: ProblemSpec) -> float:
    """Smallest per-direction value solving the discrete equation at ``z``.

    ``z`` is a flat node index or a point; the node must be interior.
    """
    g = problem.grid
    if u.grid is not g:
        raise ValueError("field lives on a different grid")
    p = int(z) if np.isscalar(z) else g.index_of(z)
    rows = np.searchsorted(g.interior, [p])
    if rows[0] >= g.interior.size or g.interior[rows[0]] != p:
        raise ValueError("node_update needs an interior node")
    tab = problem.tables
    froot = problem.f_root()[rows]
    out = np.empty(1)
    node_values(np.ascontiguousarray(u.flat), tab.idx, rows.astype(np.int64), froot,
                *kernel_args(tab, tab.boundary_values(problem.phi)), out)
    return float(out[0])


def update_residual(problem: ProblemSpec, values) -> np.ndarray:
    """Change each interior node would undergo in one exact (Jacobi) update."""
    tab = problem.tables
    u = np.ascontiguousarray(values, dtype=float).reshape(-1)
    rows = np.arange(tab.n_interior, dtype=np.int64)
    out = np.empty(tab.n_interior)
    node_values(u, tab.idx, rows, problem.f_root(), *kernel_args(tab, tab.boundary_values(problem.phi)), out)
    return out - u[tab.idx]


def solve(problem: ProblemSpec, tol: float | None = None, max_sweeps: int = 100_000,
          sweep_mode: str = GAUSS_SEIDEL, tol_residual: float | None = None, lazy: bool = True,
          start: ScalarField | None = None) -> tuple[ScalarField, SolverReport]:
    """Monotone sweeps from the initial subsolution until ``sup |update| < tol``.

    ``start`` replaces the initial subsolution; it must itself pass the
    discrete subsolution test, otherwise monotone ascent is not guaranteed.
    Exhausting ``max_sweeps`` is not an error: the report is flagged
    non-converged.
    """
    mode = _MODES.get(str(sweep_mode).lower().replace("-", "_"))
    if mode is None:
        raise ValueError(f"unknown sweep mode {sweep_mode!r}")
    if problem.f_kind == "lp" and problem.truncation is None:
        raise ValueError("an L^p density has to be solved through a truncation ladder (solve_lp)")
    t0 = time.perf_counter()
    g = problem.grid
    tab = problem.tables
    tol = default_tol(problem) if tol is None else float(tol)
    if not tol > 0:
        raise ValueError("tol must be positive")
    tol_residual = default_tol_residual(problem, tol) if tol_residual is None else float(tol_residual)
    if start is None:
        v0, consts = initial_subsolution(problem, return_constants=True)
    else:
        if start.grid is not g:
            raise ValueError("start field lives on a different grid")
        if not is_subsolution(problem, start.flat):
            raise ValueError("start field is not a discrete subsolution")
        v0, consts = start, {"A": float("nan"), "epsilon": float("nan")}
    u = np.ascontiguousarray(v0.flat.copy())
    froot = problem.f_root()
    args = kernel_args(tab, tab.boundary_values(problem.phi))
    idx = tab.idx
    F = problem.directions.frames.shape[0]
    stale = np.full((idx.size, F), -np.inf)
    last = np.zeros(idx.size, dtype=np.int64)
    history: list[float] = []
    viol = 0
    converged = False
    other = u.copy() if mode == JACOBI else None
    it = 0
    while it < max_sweeps:
        if mode == GAUSS_SEIDEL:
            up, bad = gs_sweep(u, idx, froot, *args, stale, last, lazy)
        else:
            up, bad = jacobi_sweep(u, other, idx, froot, *args, stale, last, lazy)
            u, other = other, u
        it += 1
        if not math.isfinite(up) or (it % 16 == 0 and not np.all(np.isfinite(u[idx]))):
            raise FloatingPointError(f"non-finite value after sweep {it}")
        history.append(float(up))
        viol += int(bad)
        if it % 100 == 0:
            log.debug("sweep %d sup update %.3e", it, up)
        if up < tol:
            converged = True
            break
    if not np.all(np.isfinite(u[idx])):
        raise FloatingPointError("non-finite value in the solution")
    res = update_residual(problem, u)
    upd = float(np.max(np.abs(res), initial=0.0))
    lam_sum = float(problem.directions.dir_lam.sum(axis=1).max())
    final_residual = upd * lam_sum / tab.delta**2
    report = SolverReport(iterations=it, final_residual=final_residual, monotonicity_violations=viol,
                          sup_update_history=history, wall_time=time.perf_counter() - t0, converged=converged,
                          tol=tol, tol_residual=tol_residual, update_residual=upd, sweep_mode=mode,
                          A=consts["A"], epsilon=consts["epsilon"], directions=problem.directions.descriptor(),
                          n_interior=int(idx.size))
    if not report.history_nonincreasing():
        log.info("sup update history is not monotone after the first 10 sweeps")
    values = np.where(g.klass.reshape(-1) == EXTERIOR, np.nan, u)
    return ScalarField(g, values, f"solve mode={mode} tol={tol!r} iterations={it}"), report


@dataclass
class LadderResult:
    levels: list
    fields: list
    reports: list
    gaps: list

    @property
    def top(self) -> ScalarField:
        return self.fields[-1]


def solve_lp(problem: ProblemSpec, ladder, tol: float | None = None, **kw) -> tuple[ScalarField, list[float], LadderResult]:
    """Solve the truncated problems ``f_M = min(f, M)`` along an increasing ladder.

    Returns the top-level field, the gaps ``||U_{M_{k+1}} - U_{M_k}||_inf`` and
    the full per-level record.
    """
    levels = [float(m) for m in ladder]
    if not levels or any(b <= a for a, b in zip(levels, levels[1:])) or levels[0] <= 0:
        raise ValueError("truncation ladder must be positive and strictly increasing")
    fields, reports = [], []
    for m in levels:
        u, rep = solve(problem.truncated(m), tol=tol, **kw)
        fields.append(u)
        reports.append(rep)
    idx = problem.grid.interior
    gaps = [float(np.max(np.abs(b.flat[idx] - a.flat[idx]))) for a, b in zip(fields, fields[1:])]
    return fields[-1], gaps, LadderResult(levels, fields, reports, gaps)
