"""Empirical moduli of continuity, exponent fits and inequality verdicts.

Moduli are measured on a deterministic pair sample of the nodes in the
closed domain (interior nodes plus band nodes lying on the boundary): every
axis-aligned pair up to the largest lag, plus a seeded batch of random pairs.
Under-sampling can only make a measured modulus smaller, so checks that put
the measured modulus on the larger side of an inequality err on the safe side.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .barriers import ModulusCurve, boundary_sample, minimal_concave_majorant
from .domain import BAND, EXTERIOR, INTERIOR, ScalarField, sample_field
from .solver import ProblemSpec, SolverReport, solve

log = logging.getLogger(__name__)

DEFAULT_PAIR_BUDGET = 2_000_000
DEFAULT_T_POINTS = 24
DEFAULT_ETA_CAP = 1e3


class FitError(ValueError):
    """Too few usable samples for a log-log fit."""


class AnalysisInputError(ValueError):
    """Inputs violate the preconditions of a check."""


# ------------------------------------------------------------ pair sampling


def default_t_grid(h: float, diameter: float, points: int = DEFAULT_T_POINTS, t_min_factor: float = 2.0) -> np.ndarray:
    """Geometric grid from ``t_min_factor * h`` to ``diameter / 2``."""
    lo, hi = t_min_factor * h, diameter / 2.0
    if not hi > lo:
        raise ValueError("grid too coarse for a modulus: 2h >= diameter / 2")
    return np.geomspace(lo, hi, points)


ON_BOUNDARY_TOL = 1e-12


def _interior_mask(u: ScalarField) -> np.ndarray:
    """Nodes of the closed domain: interior nodes and band nodes with ``rho = 0`` (to rounding).

    Band nodes on the boundary carry ``phi`` itself, so they belong to the
    sample of a function continuous up to the boundary. Nodes without a
    finite value and grids without a domain fall back to the interior.
    """
    g = u.grid
    mask = g.klass == INTERIOR
    if g.domain is None:
        return mask
    band = np.flatnonzero(g.klass.reshape(-1) == BAND)
    if band.size:
        on = band[np.abs(g.domain.rho(g.points(band))) <= ON_BOUNDARY_TOL]
        on = on[np.isfinite(u.flat[on])]
        mask.reshape(-1)[on] = True
    return mask


def axis_lag_maxima(values: np.ndarray, mask: np.ndarray, max_lag: int) -> np.ndarray:
    """``out[k]`` = max of ``|u(x) - u(x + k h e_a)|`` over axes ``a`` and masked pairs."""
    out = np.zeros(max_lag + 1)
    v = np.where(mask, values, np.nan)
    for a in range(values.ndim):
        for k in range(1, min(max_lag, values.shape[a] - 1) + 1):
            lo = [slice(None)] * values.ndim
            hi = [slice(None)] * values.ndim
            lo[a] = slice(0, -k)
            hi[a] = slice(k, None)
            d = np.abs(v[tuple(hi)] - v[tuple(lo)])
            if np.any(np.isfinite(d)):
                out[k] = max(out[k], float(np.nanmax(d)))
    return out


def random_grid_pairs(u: ScalarField, t_max: float, budget: int, seed: int,
                      mask: np.ndarray | None = None, chunk: int = 1 << 18):
    """Yield ``(dist, |u(x) - u(y)|)`` batches for seeded random masked pairs.

    Offsets are integer lattice vectors whose length is log-uniform in
    ``[h, t_max]``, so every scale of the t-grid gets pairs.
    """
    g = u.grid
    mask = _interior_mask(u) if mask is None else mask
    nodes = np.flatnonzero(mask.reshape(-1))
    if nodes.size == 0 or budget <= 0:
        return
    rng = np.random.default_rng(seed)
    dim = len(g.shape)
    shape = np.asarray(g.shape)
    flat_mask = mask.reshape(-1)
    vals = u.flat
    done = 0
    while done < budget:
        m = min(chunk, budget - done)
        done += m
        x = nodes[rng.integers(0, nodes.size, m)]
        direc = rng.standard_normal((m, dim))
        direc /= np.linalg.norm(direc, axis=1, keepdims=True)
        radius = np.exp(rng.uniform(0.0, math.log(max(t_max / g.h, 1.0 + 1e-9)), m))
        off = np.rint(direc * radius[:, None]).astype(np.int64)
        xi = np.stack(np.unravel_index(x, g.shape), axis=1)
        yi = xi + off
        ok = np.all((yi >= 0) & (yi < shape), axis=1) & np.any(off != 0, axis=1)
        y = np.ravel_multi_index(tuple(np.where(ok[:, None], yi, xi).T), g.shape)
        ok &= flat_mask[y]
        dist = np.linalg.norm(off[ok], axis=1) * g.h
        yield dist, np.abs(vals[y[ok]] - vals[x[ok]])


def _bin_max(t_grid: np.ndarray, dist: np.ndarray, diff: np.ndarray, acc: np.ndarray) -> None:
    # a pair at distance s counts for every t >= s; record it at the first such t
    k = np.searchsorted(t_grid, dist * (1 - 1e-12), side="left")
    ok = k < t_grid.size
    np.maximum.at(acc, k[ok], diff[ok])


def empirical_modulus(u: ScalarField, t_grid=None, pair_budget: int = DEFAULT_PAIR_BUDGET, seed: int = 0,
                      mask: np.ndarray | None = None) -> ModulusCurve:
    """Measured modulus of ``u`` over interior nodes on ``t_grid``.

    For each ``t`` the value is the largest ``|u(x) - u(y)|`` over sampled
    pairs with ``|x - y| <= t``: all axis pairs with lag ``floor(t / h)`` or
    less and ``pair_budget`` random pairs. The result is nondecreasing and
    carries its minimal concave majorant.
    """
    g = u.grid
    if t_grid is None:
        t_grid = default_t_grid(g.h, g.domain.diameter)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0 or np.any(np.diff(t_grid) <= 0) or t_grid[0] <= 0:
        raise ValueError("t_grid must be positive and strictly increasing")
    if t_grid[0] < 2 * g.h * (1 - 1e-12):
        raise ValueError("t_grid must start at 2h or later")
    mask = _interior_mask(u) if mask is None else mask
    if not np.all(np.isfinite(u.values[mask])):
        raise AnalysisInputError("field is not finite at interior nodes")
    acc = np.full(t_grid.size, -np.inf)
    max_lag = int(math.floor(t_grid[-1] / g.h + 1e-9))
    lag = axis_lag_maxima(u.values, mask, max_lag)
    ks = np.arange(1, max_lag + 1)
    _bin_max(t_grid, ks * g.h, lag[1:], acc)
    for dist, diff in random_grid_pairs(u, t_grid[-1], pair_budget, seed, mask):
        _bin_max(t_grid, dist, diff, acc)
    keep = np.isfinite(acc) | (np.maximum.accumulate(np.where(np.isfinite(acc), 1, 0)) > 0)
    if not np.all(keep):
        log.warning("no sampled pairs below t = %s; dropping those t values", t_grid[~keep].tolist())
    t_grid, acc = t_grid[keep], acc[keep]
    omega = np.maximum.accumulate(np.where(np.isfinite(acc), acc, 0.0))
    return minimal_concave_majorant(np.column_stack([t_grid, omega]))


def point_modulus(points: np.ndarray, values: np.ndarray, t_grid, chunk: int = 512) -> ModulusCurve:
    """Measured modulus over all pairs of a scattered sample (e.g. boundary points)."""
    t_grid = np.asarray(t_grid, dtype=float)
    acc = np.zeros(t_grid.size)
    for s in range(0, points.shape[0], chunk):
        e = min(points.shape[0], s + chunk)
        dist = np.linalg.norm(points[s:e, None, :] - points[None, :, :], axis=2).ravel()
        diff = np.abs(values[s:e, None] - values[None, :]).ravel()
        _bin_max(t_grid, dist, diff, acc)
    return minimal_concave_majorant(np.column_stack([t_grid, np.maximum.accumulate(acc)]))


def step_value(curve: ModulusCurve, s) -> np.ndarray:
    """Measured modulus at ``s`` without interpolation upwards: the value at the largest sample ``t <= s``."""
    s = np.asarray(s, dtype=float)
    k = np.searchsorted(curve.t, s * (1 + 1e-12), side="right") - 1
    return np.where(k >= 0, curve.omega[np.clip(k, 0, None)], 0.0)


# ------------------------------------------------------------ exponent fits


@dataclass
class ExponentFit:
    t_range: tuple
    slope: float
    intercept: float
    residual: float
    pair_budget: int
    samples: int

    def to_text(self) -> str:
        return json.dumps(asdict(self), indent=2)


def fit_exponent(curve: ModulusCurve, t_range=None, pair_budget: int = 0, min_samples: int = 5) -> ExponentFit:
    """Least-squares slope of ``log omega`` against ``log t`` on ``t_range``."""
    t, w = curve.t, curve.omega
    lo, hi = (t[t > 0].min(), t.max()) if t_range is None else t_range
    sel = (t >= lo * (1 - 1e-12)) & (t <= hi * (1 + 1e-12)) & (w > 0) & (t > 0)
    if np.count_nonzero(sel) < min_samples:
        raise FitError(f"only {int(np.count_nonzero(sel))} usable samples in [{lo}, {hi}]; need {min_samples}")
    x, y = np.log(t[sel]), np.log(w[sel])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    if not math.isfinite(slope):
        raise FitError("non-finite slope")
    return ExponentFit((float(lo), float(hi)), float(slope), float(intercept), resid, int(pair_budget),
                       int(np.count_nonzero(sel)))


# ------------------------------------------------------------ verdict helpers


@dataclass
class Verdict:
    name: str
    passed: bool
    numbers: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_text(self) -> str:
        return json.dumps({"check": self.name, "verdict": "PASS" if self.passed else "FAIL",
                           **self.numbers, "notes": self.notes}, indent=2, default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    return str(o)


def blows_up(eta: np.ndarray, window: int | None = None, factor: float = 1.5) -> bool:
    """Blow-up signature: ``eta`` rises strictly at every step as ``t`` decreases
    through the smallest third of the grid, and by more than ``factor`` overall."""
    eta = np.asarray(eta, dtype=float)
    if eta.size < 3:
        return False
    window = max(3, eta.size // 3) if window is None else window
    head = eta[:window]
    if np.all(head <= 0):
        return False
    rising = np.all(np.diff(head) < 0)
    return bool(rising and head[0] > factor * max(head[-1], 1e-300))


def _sup_root_f(problem: ProblemSpec) -> tuple[float, ScalarField]:
    g = problem.grid
    froot = problem.f_root()
    vals = np.full(g.size, np.nan)
    vals[g.interior] = froot
    return float(froot.max(initial=0.0)), ScalarField(g, vals, "f^(1/n)")


def boundary_data_modulus(problem: ProblemSpec, t_grid, count: int = 3000, seed: int = 5) -> ModulusCurve:
    """Measured modulus of ``phi`` on a quasi-uniform boundary sample (all pairs)."""
    pts = boundary_sample(problem.domain, count, seed)
    return point_modulus(pts, np.asarray(problem.phi(pts), dtype=float), t_grid)


# ------------------------------------------------------------ regularity verdicts


def theorem_a_verdict(u: ScalarField, problem: ProblemSpec, t_grid=None, pair_budget: int = DEFAULT_PAIR_BUDGET,
                      seed: int = 0, eta_cap: float = DEFAULT_ETA_CAP, boundary_count: int = 3000) -> Verdict:
    """Ratio of the measured modulus of ``u`` to the interior regularity bound.

    ``eta(t) = omega_U(t) / [(1 + sup f^{1/n}) max(omega_phi(t^{1/2}),
    omega_{f^{1/n}}(t), t^{1/2})]``; PASS when ``max eta <= eta_cap`` and
    :func:`blows_up` finds no blow-up signature.
    """
    g = u.grid
    if t_grid is None:
        t_grid = default_t_grid(g.h, g.domain.diameter)
    t_grid = np.asarray(t_grid, dtype=float)
    wu = empirical_modulus(u, t_grid, pair_budget, seed)
    t, omega_u = wu.t[1:], wu.omega[1:]          # drop the origin the majorant adds
    sup_f, froot = _sup_root_f(problem)
    wf = empirical_modulus(froot, t, pair_budget, seed + 1)
    sq = np.sqrt(t)
    wphi = boundary_data_modulus(problem, np.unique(np.concatenate([t, sq])), boundary_count)
    denom = (1.0 + sup_f) * np.maximum.reduce([step_value(wphi, sq), step_value(wf, t), sq])
    eta = omega_u / denom
    up = blows_up(eta)
    passed = bool(eta.max() <= eta_cap and not up)
    return Verdict("theorem-a", passed, {"t": t, "omega_u": omega_u, "denominator": denom, "eta": eta,
                                        "eta_max": float(eta.max()), "eta_cap": eta_cap, "blow_up": up,
                                        "sup_f_root": sup_f, "pair_budget": pair_budget, "seed": seed})


def holder_exponent_check(u: ScalarField, lower: float, t_range=None, slack: float = 0.1,
                          pair_budget: int = DEFAULT_PAIR_BUDGET, seed: int = 0) -> Verdict:
    """Fitted exponent of the measured modulus against ``lower - slack``.

    The default range is ``[2h, 0.2 diam]``.
    """
    g = u.grid
    d = g.domain.diameter
    lo, hi = (2 * g.h, 0.2 * d) if t_range is None else t_range
    if not hi > lo:
        raise FitError(f"empty fit range [{lo:g}, {hi:g}]")
    curve = empirical_modulus(u, np.geomspace(lo, hi, DEFAULT_T_POINTS), pair_budget, seed)
    fit = fit_exponent(curve, (lo, hi), pair_budget)
    return Verdict("exponent", fit.slope >= lower - slack,
                   {"slope": fit.slope, "threshold": lower - slack, "fit": asdict(fit)})


def _boundary_values_used(problem: ProblemSpec) -> tuple[np.ndarray, np.ndarray]:
    g = problem.grid
    band = problem.phi_band()[g.band]
    cross = problem.tables.boundary_values(problem.phi)
    return band, cross


def stability_check(p1: ProblemSpec, p2: ProblemSpec, tol: float | None = None,
                    solved: tuple | None = None, **solve_kw) -> Verdict:
    """Sup-norm stability of solutions under changes of ``(phi, f)``.

    LHS is ``max |U1 - U2|`` over interior nodes; RHS is ``d^2 sup|f1 - f2|^{1/n}
    + max |phi1 - phi2|`` with the boundary term taken over the band nodes and
    boundary crossings the scheme uses. Also reports the ``L^n``/``L^1`` ratio
    (not asserted). ``solved`` may hold precomputed ``((U1, rep1), (U2, rep2))``.
    """
    g1, g2 = p1.grid, p2.grid
    if g1.shape != g2.shape or g1.start != g2.start or g1.h != g2.h or p1.domain is not p2.domain \
            and p1.domain.describe() != p2.domain.describe():
        raise AnalysisInputError("stability check needs both problems on the same grid")
    if p1.directions.descriptor() != p2.directions.descriptor() or p1.arm_scale != p2.arm_scale:
        raise AnalysisInputError("stability check needs the same direction set and arm length")
    if solved is None:
        solved = (solve(p1, tol=tol, **solve_kw), solve(p2, tol=tol, **solve_kw))
    (u1, r1), (u2, r2) = solved
    idx = g1.interior
    du = np.abs(u1.flat[idx] - u2.flat[idx])
    n = p1.n
    df = np.abs(p1.f_values() - p2.f_values())
    b1, c1 = _boundary_values_used(p1)
    b2, c2 = _boundary_values_used(p2)
    dphi = max(float(np.max(np.abs(b1 - b2), initial=0.0)), float(np.max(np.abs(c1 - c2), initial=0.0)))
    d = p1.domain.diameter
    rhs = d**2 * float(df.max(initial=0.0)) ** (1.0 / n) + dphi
    eps = 2.0 * (max(r1.tol, r2.tol) + max(r1.consistency_slack, r2.consistency_slack))
    lhs = float(du.max(initial=0.0))
    cell = g1.h ** (2 * n)
    ln = float(np.sum(du**n) * cell) ** (1.0 / n)
    l1 = float(np.sum(df) * cell) ** (1.0 / n)
    denom = dphi + d**2 / 4.0 * l1
    ratio = ln / denom if denom > 0 else (0.0 if ln == 0 else math.inf)
    return Verdict("stability", lhs <= rhs + eps,
                   {"lhs": lhs, "rhs": rhs, "eps_disc": eps, "phi_diff": dphi,
                    "f_diff_root": float(df.max(initial=0.0)) ** (1.0 / n), "Ln_L1_ratio": ratio,
                    "reports": [r1.summary(), r2.summary()]})


# ------------------------------------------------------------ psi norms


def modulus_function(spec: str):
    """Parse ``"power:a"`` (``t^a``) or ``"log:a"`` (``1 / |log t|^a`` near 0, capped at 1)."""
    kind, _, arg = spec.partition(":")
    a = float(arg) if arg else 1.0
    if not a > 0:
        raise ValueError("modulus exponent must be positive")
    if kind == "power":
        return lambda t: np.asarray(t, dtype=float) ** a
    if kind == "log":
        def fn(t):
            t = np.asarray(t, dtype=float)
            with np.errstate(divide="ignore"):
                return np.where(t < math.exp(-1), np.abs(np.log(t)) ** (-a), 1.0)
        return fn
    raise ValueError(f"unknown modulus {spec!r}")


@dataclass
class PsiNormReport:
    sup_part: float
    ratio_part: float
    psi: str

    @property
    def total(self) -> float:
        return self.sup_part + self.ratio_part


def psi_norm(u: ScalarField, psi, psi_name: str = "", t_max: float | None = None,
             pair_budget: int = DEFAULT_PAIR_BUDGET, seed: int = 0) -> PsiNormReport:
    """``sup |u| + sup |u(x) - u(y)| / psi(|x - y|)`` over interior nodes and the modulus pair sample."""
    g = u.grid
    mask = _interior_mask(u)
    vals = u.values[mask]
    if vals.size == 0:
        return PsiNormReport(0.0, 0.0, psi_name)
    sup_part = float(np.max(np.abs(vals)))
    t_max = g.domain.diameter / 2.0 if t_max is None else t_max
    max_lag = int(math.floor(t_max / g.h + 1e-9))
    lag = axis_lag_maxima(u.values, mask, max_lag)
    dists = np.arange(1, max_lag + 1) * g.h
    pv = np.asarray(psi(dists), dtype=float)
    if np.any(pv <= 0):
        raise AnalysisInputError("psi vanishes at a sampled positive distance")
    ratio = float(np.max(lag[1:] / pv, initial=0.0))
    for dist, diff in random_grid_pairs(u, t_max, pair_budget, seed, mask):
        pv = np.asarray(psi(dist), dtype=float)
        if np.any(pv <= 0):
            raise AnalysisInputError("psi vanishes at a sampled positive distance")
        ratio = max(ratio, float(np.max(diff / pv, initial=0.0)))
    return PsiNormReport(sup_part, ratio, psi_name)


def point_psi_norm(points: np.ndarray, values: np.ndarray, psi, psi_name: str = "", chunk: int = 512) -> PsiNormReport:
    """``psi``-norm over all pairs of a scattered sample."""
    ratio = 0.0
    for s in range(0, points.shape[0], chunk):
        e = min(points.shape[0], s + chunk)
        dist = np.linalg.norm(points[s:e, None, :] - points[None, :, :], axis=2)
        diff = np.abs(values[s:e, None] - values[None, :])
        pos = dist > 0
        pv = np.asarray(psi(dist[pos]), dtype=float)
        if np.any(pv <= 0):
            raise AnalysisInputError("psi vanishes at a sampled positive distance")
        ratio = max(ratio, float(np.max(diff[pos] / pv, initial=0.0)))
    return PsiNormReport(float(np.max(np.abs(values), initial=0.0)), ratio, psi_name)


def psi_norm_verdict(u: ScalarField, problem: ProblemSpec, psi1: str = "power:1", psi2: str | None = None,
                     pair_budget: int = DEFAULT_PAIR_BUDGET, seed: int = 0, boundary_count: int = 2000) -> Verdict:
    """``||U||_psi <= 2 (d^2 + 1)(1 + sup f^{1/n}) max(||phi||_psi1, ||f^{1/n}||_psi2)``
    with ``psi(t) = max(psi1(t^{1/2}), psi2(t))``; ``psi2`` defaults to ``psi1``."""
    psi2 = psi1 if psi2 is None else psi2
    f1, f2 = modulus_function(psi1), modulus_function(psi2)

    def psi(t):
        t = np.asarray(t, dtype=float)
        return np.maximum(f1(np.sqrt(t)), f2(t))

    name = f"max({psi1}(sqrt t), {psi2}(t))"
    nu = psi_norm(u, psi, name, pair_budget=pair_budget, seed=seed)
    pts = boundary_sample(problem.domain, boundary_count, seed + 3)
    nphi = point_psi_norm(pts, np.asarray(problem.phi(pts), dtype=float), f1, psi1)
    sup_f, froot = _sup_root_f(problem)
    nf = psi_norm(froot, f2, psi2, pair_budget=pair_budget, seed=seed + 1)
    d = problem.domain.diameter
    bound = 2.0 * (d**2 + 1.0) * (1.0 + sup_f) * max(nphi.total, nf.total)
    return Verdict("psi-norm", nu.total <= bound,
                   {"norm_u": asdict(nu) | {"total": nu.total}, "norm_phi": asdict(nphi) | {"total": nphi.total},
                    "norm_f_root": asdict(nf) | {"total": nf.total}, "bound": bound})


# ------------------------------------------------------------ Laplacian mass


def laplacian_mass(u: ScalarField) -> float:
    """``h^{2n}`` times the sum over interior nodes of the cross-stencil Laplacian.

    Neighbours of interior nodes are interior or band nodes, so the field must
    be finite there.
    """
    g = u.grid
    v = u.values
    inner = g.klass == INTERIOR
    total = 0.0
    for a in range(v.ndim):
        up = np.roll(v, -1, axis=a)
        dn = np.roll(v, 1, axis=a)
        lap = (up + dn - 2 * v)[inner]
        if not np.all(np.isfinite(lap)):
            raise AnalysisInputError("field is not finite next to an interior node")
        total += float(lap.sum())
    return total * g.h ** (v.ndim - 2)


def mass_comparison(u: ScalarField, v: ScalarField, tol: float, band_tol: float = 1e-12,
                    slack: float = 0.05) -> Verdict:
    """Check ``mass(u) <= mass(v) + slack |mass(v)|`` for ``v <= u`` with equal boundary values."""
    g = u.grid
    if v.grid is not g and (v.grid.shape != g.shape or v.grid.start != g.start):
        raise AnalysisInputError("fields live on different grids")
    idx, band = g.interior, g.band
    below = float(np.max(v.flat[idx] - u.flat[idx], initial=-np.inf))
    band_gap = float(np.max(np.abs(u.flat[band] - v.flat[band]), initial=0.0))
    if below > tol:
        raise AnalysisInputError(f"v exceeds u by {below:.3e} > tol {tol:.3e} at an interior node")
    if band_gap > band_tol:
        raise AnalysisInputError(f"boundary values differ by {band_gap:.3e} > {band_tol:.3e}")
    mu, mv = laplacian_mass(u), laplacian_mass(v)
    return Verdict("mass", mu <= mv + slack * abs(mv),
                   {"mass_u": mu, "mass_v": mv, "slack": slack, "max_v_minus_u": below, "band_gap": band_gap})


def ball_volume(real_dim: int, radius: float = 1.0) -> float:
    return math.pi ** (real_dim / 2) / math.gamma(real_dim / 2 + 1) * radius**real_dim


# ------------------------------------------------------------ U versus U0


def omega_u0_comparison(problem: ProblemSpec, t_grid=None, pair_budget: int = DEFAULT_PAIR_BUDGET, seed: int = 0,
                        eta_cap: float = DEFAULT_ETA_CAP, tol: float | None = None, solved=None, **solve_kw) -> Verdict:
    """Compare the modulus of ``U`` with that of ``U0`` (same data, ``f = 0``).

    ``ratio(t) = omega_U(t) / [(1 + sup f^{1/n}) max(omega_U0(t), omega_{f^{1/n}}(t), t^{1/2})]``.
    When ``omega_U0`` and ``omega_{f^{1/n}}`` both vanish the case is flagged
    degenerate; the ``t^{1/2}`` floor keeps the ratio finite.
    """
    from .catalog import lookup

    if solved is None:
        u, _ = solve(problem, tol=tol, **solve_kw)
        u0, _ = solve(problem.with_data(f=lookup("zero")), tol=tol, **solve_kw)
    else:
        u, u0 = solved
    g = u.grid
    if t_grid is None:
        t_grid = default_t_grid(g.h, g.domain.diameter)
    wu = empirical_modulus(u, t_grid, pair_budget, seed)
    t, omega_u = wu.t[1:], wu.omega[1:]
    w0 = step_value(empirical_modulus(u0, t, pair_budget, seed), t)
    sup_f, froot = _sup_root_f(problem)
    wf = step_value(empirical_modulus(froot, t, pair_budget, seed + 1), t)
    raw = np.maximum(w0, wf)
    scale = max(1.0, float(np.nanmax(np.abs(u0.flat[g.interior]))))
    degenerate = bool(np.all(raw <= 1e-12 * scale))
    denom = (1.0 + sup_f) * np.maximum(raw, np.sqrt(t))
    ratio = omega_u / denom
    up = blows_up(ratio)
    notes = ["omega_U0 and omega_f vanish; the t^(1/2) floor sets the denominator"] if degenerate else []
    return Verdict("omega-u0", bool(ratio.max() <= eta_cap and not up),
                   {"t": t, "omega_u": omega_u, "omega_u0": w0, "omega_f_root": wf, "ratio": ratio,
                    "ratio_max": float(ratio.max()), "degenerate": degenerate, "blow_up": up}, notes)


# ------------------------------------------------------------ comparison with barriers


def modulus_bound_check(u_curve: ModulusCurve, v_curve: ModulusCurve, w_curve: ModulusCurve,
                        f_curve: ModulusCurve, diameter: float, tol: float) -> Verdict:
    """``omega_U <= (d^2 + 1) max(omega_v, omega_w, omega_{f^{1/n}}) + 4 tol`` at the shared t values."""
    t = u_curve.t
    rhs = (diameter**2 + 1) * np.maximum.reduce([step_value(v_curve, t), step_value(w_curve, t),
                                                  step_value(f_curve, t)]) + 4 * tol
    return Verdict("modulus-bound", bool(np.all(u_curve.omega <= rhs)),
                   {"t": t, "omega_u": u_curve.omega, "rhs": rhs})


def field_on_interior(problem: ProblemSpec, fn, metadata: str = "") -> ScalarField:
    """Sample ``fn`` at interior nodes only (NaN elsewhere)."""
    return sample_field(problem.grid, fn, metadata, where="interior")


__all__ = [
    "ExponentFit", "FitError", "AnalysisInputError", "PsiNormReport", "Verdict", "ball_volume", "blows_up",
    "boundary_data_modulus", "default_t_grid", "empirical_modulus", "field_on_interior", "fit_exponent",
    "holder_exponent_check", "laplacian_mass", "mass_comparison", "modulus_bound_check", "modulus_function",
    "omega_u0_comparison", "point_modulus", "point_psi_norm", "psi_norm", "psi_norm_verdict", "stability_check",
    "step_value", "theorem_a_verdict",
]
