"""Bounded domains given by defining functions, Cartesian grids and node tags.

Points of C^n are handled as real vectors of length 2n with interleaved
coordinates ``(Re z1, Im z1, Re z2, Im z2, ...)``. All domain queries go through
pointwise evaluation of the defining function ``rho``; nothing here needs its
derivatives.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage

INTERIOR = 0
BAND = 1
EXTERIOR = 2
TAGS = {INTERIOR: "I", BAND: "B", EXTERIOR: "E"}

DEFAULT_NODE_BUDGET = 20_000_000


class DomainError(ValueError):
    """Invalid or empty domain description."""


class ResourceError(RuntimeError):
    """A configured size budget would be exceeded."""


RhoFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DomainSpec:
    """A strongly hyperconvex Lipschitz domain ``{rho < 0}``.

    ``c`` is the constant in ``dd^c rho >= c beta`` with the normalisation
    ``dd^c |z|^2 = beta``; ``lipschitz_bound`` holds on a neighbourhood of the
    closure. ``center`` is a reference interior point (ball centre or the
    deepest sampled point).
    """

    kind: str
    n: int
    params: dict
    rho: RhoFn = field(repr=False)
    c: float
    lipschitz_bound: float
    diameter: float
    circumradius: float
    center: np.ndarray = field(repr=False)
    bbox: tuple[np.ndarray, np.ndarray] = field(repr=False)
    shl: bool = True

    @property
    def real_dim(self) -> int:
        return 2 * self.n

    def __call__(self, x) -> np.ndarray:
        return self.rho(np.asarray(x, dtype=float))

    def describe(self) -> str:
        inner = ",".join(f"{k}={_fmt_param(v)}" for k, v in sorted(self.params.items()))
        return f"{self.kind}({inner})"


def _fmt_param(v) -> str:
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ";".join(_fmt_param(x) for x in v) + "]"
    return repr(v) if isinstance(v, float) else str(v)


def complex_to_real(z) -> np.ndarray:
    """Map points of C^n (last axis) to interleaved real coordinates."""
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape[:-1] + (2 * z.shape[-1],))
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out


def real_to_complex(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[..., 0::2] + 1j * x[..., 1::2]


def _as_center(center, n: int) -> np.ndarray:
    """Accept a center as a complex n-vector or a real 2n-vector."""
    c = np.asarray(center)
    if np.iscomplexobj(c):
        if c.shape != (n,):
            raise DomainError(f"complex center must have length {n}")
        return complex_to_real(c)
    c = np.asarray(c, dtype=float)
    if c.shape == (2 * n,):
        return c
    if c.shape == (n,):
        return complex_to_real(c.astype(complex))
    raise DomainError(f"center must have length {n} (complex) or {2 * n} (real)")


def _ball_rho(center: np.ndarray, radius: float) -> RhoFn:
    def rho(x):
        d = np.asarray(x, dtype=float) - center
        return np.einsum("...i,...i->...", d, d) - radius * radius

    return rho


def _deepest_point(rho: RhoFn, lo: np.ndarray, hi: np.ndarray, samples: int = 20000, seed: int = 0):
    rng = np.random.default_rng(seed)
    pts = lo + (hi - lo) * rng.random((samples, lo.size))
    vals = rho(pts)
    k = int(np.argmin(vals))
    return pts[k], float(vals[k])


def make_domain(kind: str, n: int = 2, **params) -> DomainSpec:
    """Build a built-in domain.

    Kinds: ``ball(center=0, radius=1)``, ``intersection_of_balls(balls=[(center,
    radius), ...])``, ``l1_ball(scale=1, lipschitz=None)``,
    ``strictly_convex(expr='ellipsoid', axes=...)`` and ``polydisc(radius=1)``.
    The polydisc is hyperconvex but not strongly so; it is only accepted here
    so that :func:`check_shl` can reject it.
    """
    kind = kind.lower().replace("-", "_")
    if n < 1:
        raise DomainError("complex dimension must be >= 1")
    dim = 2 * n

    if kind == "ball":
        radius = float(params.get("radius", 1.0))
        if not radius > 0:
            raise DomainError("ball radius must be positive")
        center = _as_center(params.get("center", np.zeros(dim)), n)
        return DomainSpec(
            kind="ball",
            n=n,
            params={"center": center.tolist(), "radius": radius},
            rho=_ball_rho(center, radius),
            c=1.0,
            # |grad rho| = 2|z - a| on the neighbourhood |z - a| <= 1.25 R
            lipschitz_bound=2.5 * radius,
            diameter=2.0 * radius,
            circumradius=radius,
            center=center,
            bbox=(center - radius, center + radius),
        )

    if kind == "intersection_of_balls":
        balls = params.get("balls")
        if not balls:
            raise DomainError("intersection_of_balls needs a nonempty list of (center, radius)")
        parts = [make_domain("ball", n, center=c, radius=r) for c, r in balls]
        lo = np.max([p.bbox[0] for p in parts], axis=0)
        hi = np.min([p.bbox[1] for p in parts], axis=0)
        if np.any(lo >= hi):
            raise DomainError("intersection of balls is empty (disjoint bounding boxes)")
        rhos = [p.rho for p in parts]

        def rho(x):
            x = np.asarray(x, dtype=float)
            out = rhos[0](x)
            for r in rhos[1:]:
                out = np.maximum(out, r(x))
            return out

        z0, v0 = _deepest_point(rho, lo, hi)
        if not v0 < 0:
            raise DomainError("intersection of balls is empty (no sampled point with all rho_i < 0)")
        diam = min(min(p.diameter for p in parts), float(np.linalg.norm(hi - lo)))
        return DomainSpec(
            kind="intersection_of_balls",
            n=n,
            params={"balls": [(p.params["center"], p.params["radius"]) for p in parts]},
            rho=rho,
            c=min(p.c for p in parts),
            lipschitz_bound=max(p.lipschitz_bound for p in parts),
            diameter=diam,
            circumradius=min(min(p.circumradius for p in parts), diam),
            center=z0,
            bbox=(lo, hi),
        )

    if kind == "l1_ball":
        scale = float(params.get("scale", 1.0))
        if not scale > 0:
            raise DomainError("l1_ball scale must be positive")

        def rho(x):
            x = np.asarray(x, dtype=float)
            return np.hypot(x[..., 0::2], x[..., 1::2]).sum(axis=-1) - scale

        lip = params.get("lipschitz")
        lip = math.sqrt(n) if lip is None else float(lip)
        return DomainSpec(
            kind="l1_ball",
            n=n,
            params={"scale": scale, "lipschitz": lip},
            rho=rho,
            # d/dz d/dzbar |z_j| = 1/(4|z_j|) >= 1/(4 scale) on the closure
            c=1.0 / (4.0 * scale),
            lipschitz_bound=lip,
            diameter=2.0 * scale,
            circumradius=scale,
            center=np.zeros(dim),
            bbox=(np.full(dim, -scale), np.full(dim, scale)),
        )

    if kind == "strictly_convex":
        expr = params.get("expr", "ellipsoid")
        if expr == "ellipsoid":
            # sum_j |z_j|^2 / a_j^2 < 1
            axes = np.broadcast_to(np.asarray(params.get("axes", 1.0), dtype=float), (n,)).copy()
            if np.any(axes <= 0):
                raise DomainError("ellipsoid axes must be positive")
            wts = np.repeat(1.0 / axes**2, 2)
            c = float(np.min(1.0 / axes**2))
            half = np.repeat(axes, 2)
        elif expr == "real_ellipsoid":
            # sum_k x_k^2 / b_k^2 < 1 over the 2n real coordinates
            axes = np.broadcast_to(np.asarray(params.get("axes", 1.0), dtype=float), (dim,)).copy()
            if np.any(axes <= 0):
                raise DomainError("ellipsoid axes must be positive")
            wts = 1.0 / axes**2
            c = float(np.min(0.5 * (wts[0::2] + wts[1::2])))
            half = axes
        else:
            raise DomainError(f"unknown strictly convex expression id {expr!r}")

        def rho(x):
            x = np.asarray(x, dtype=float)
            return (x * x * wts).sum(axis=-1) - 1.0

        return DomainSpec(
            kind="strictly_convex",
            n=n,
            params={"expr": expr, "axes": axes.tolist()},
            rho=rho,
            c=c,
            lipschitz_bound=float(2.5 * np.max(wts * half)),
            diameter=float(2.0 * half.max()),
            circumradius=float(half.max()),
            center=np.zeros(dim),
            bbox=(-half, half.copy()),
        )

    if kind == "polydisc":
        radius = float(params.get("radius", 1.0))

        def rho(x):
            x = np.asarray(x, dtype=float)
            return (x[..., 0::2] ** 2 + x[..., 1::2] ** 2).max(axis=-1) - radius**2

        return DomainSpec(
            kind="polydisc",
            n=n,
            params={"radius": radius},
            rho=rho,
            c=0.0,
            lipschitz_bound=2.5 * radius,
            diameter=2.0 * radius * math.sqrt(n),
            circumradius=radius * math.sqrt(n),
            center=np.zeros(dim),
            bbox=(np.full(dim, -radius), np.full(dim, radius)),
            shl=False,
        )

    raise DomainError(f"unknown domain kind {kind!r}")


def boundary_crossing(domain: DomainSpec, z, v, t_max: float, rho_tol: float = 1e-8, max_iter: int = 80):
    """Distance along the ray ``z + t v`` at which ``rho`` changes sign.

    Returns ``None`` when ``z + t_max v`` is still inside. Otherwise bisects on
    ``[0, t_max]`` until ``|rho| <= rho_tol``; if the iteration cap is hit the
    current midpoint is returned and a ``RuntimeWarning`` is issued.
    """
    z = np.asarray(z, dtype=float)
    v = np.asarray(v, dtype=float)
    if not domain.rho(z) < 0:
        raise DomainError("boundary_crossing needs an interior starting point")
    t, ok = bisect_crossings(domain.rho, z[None, :], v[None, :], np.array([t_max]), rho_tol, max_iter)
    if np.isnan(t[0]):
        return None
    if not ok[0]:
        warnings.warn("boundary_crossing hit the bisection cap", RuntimeWarning, stacklevel=2)
    return float(t[0])


def bisect_crossings(rho: RhoFn, z: np.ndarray, v: np.ndarray, t_max: np.ndarray, rho_tol: float, max_iter: int = 80):
    """Vectorised bisection for many rays at once.

    Returns ``(t, converged)``; ``t`` is NaN for rays whose far end is inside.
    """
    t_max = np.broadcast_to(np.asarray(t_max, dtype=float), (z.shape[0],))
    far = rho(z + t_max[:, None] * v)
    t = np.full(z.shape[0], np.nan)
    done = np.zeros(z.shape[0], dtype=bool)
    hit = far >= 0
    # far end already on the boundary
    exact = hit & (np.abs(far) <= rho_tol)
    t[exact] = t_max[exact]
    done[exact] = True
    todo = np.flatnonzero(hit & ~exact)
    lo = np.zeros(todo.size)
    hi = t_max[todo].copy()
    zt, vt = z[todo], v[todo]
    active = np.arange(todo.size)
    for _ in range(max_iter):
        if active.size == 0:
            break
        mid = 0.5 * (lo[active] + hi[active])
        r = rho(zt[active] + mid[:, None] * vt[active])
        conv = np.abs(r) <= rho_tol
        t[todo[active[conv]]] = mid[conv]
        done[todo[active[conv]]] = True
        inside = r < 0
        lo[active[inside & ~conv]] = mid[inside & ~conv]
        hi[active[~inside & ~conv]] = mid[~inside & ~conv]
        active = active[~conv]
    if active.size:
        t[todo[active]] = 0.5 * (lo[active] + hi[active])
    return t, done | ~hit


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform Cartesian grid on R^{2n} aligned to integer multiples of ``h``.

    ``klass`` tags every node as INTERIOR (rho < 0), BAND (rho >= 0 with an
    interior node within ``reach`` cells in the max-norm) or EXTERIOR.
    """

    n: int
    h: float
    start: tuple[int, ...]
    shape: tuple[int, ...]
    reach: int
    klass: np.ndarray = field(repr=False)
    domain: DomainSpec = field(repr=False)

    @property
    def origin(self) -> np.ndarray:
        return np.asarray(self.start, dtype=float) * self.h

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def strides(self) -> np.ndarray:
        """Flat-index strides (C order, last coordinate fastest)."""
        s = np.ones(len(self.shape), dtype=np.int64)
        for k in range(len(self.shape) - 2, -1, -1):
            s[k] = s[k + 1] * self.shape[k + 1]
        return s

    def axis(self, k: int) -> np.ndarray:
        return (self.start[k] + np.arange(self.shape[k])) * self.h

    def points(self, flat) -> np.ndarray:
        """Coordinates of nodes given by flat indices, shape (m, 2n)."""
        idx = np.unravel_index(np.asarray(flat, dtype=np.int64), self.shape)
        return np.stack([(self.start[k] + idx[k]) * self.h for k in range(len(self.shape))], axis=-1)

    def index_of(self, x) -> int:
        """Flat index of the node at (or nearest to) point ``x``."""
        x = np.asarray(x, dtype=float)
        ijk = np.rint(x / self.h).astype(np.int64) - np.asarray(self.start)
        if np.any(ijk < 0) or np.any(ijk >= np.asarray(self.shape)):
            raise IndexError("point outside the grid")
        return int(np.ravel_multi_index(tuple(ijk), self.shape))

    @property
    def interior(self) -> np.ndarray:
        """Flat indices of interior nodes in lexicographic order."""
        return np.flatnonzero(self.klass.ravel() == INTERIOR)

    @property
    def band(self) -> np.ndarray:
        return np.flatnonzero(self.klass.ravel() == BAND)

    def counts(self) -> dict[str, int]:
        k = self.klass.ravel()
        return {TAGS[t]: int(np.count_nonzero(k == t)) for t in (INTERIOR, BAND, EXTERIOR)}


def _eval_on_grid(fn, n, h, start, shape, chunk=1 << 20) -> np.ndarray:
    total = int(np.prod(shape))
    out = np.empty(total)
    dummy = Grid(n, h, start, shape, 0, np.empty(0), None)
    for s in range(0, total, chunk):
        e = min(total, s + chunk)
        out[s:e] = fn(dummy.points(np.arange(s, e)))
    return out.reshape(shape)


def build_grid(domain: DomainSpec, h: float, margin: float | None = None, reach: int = 2,
               node_budget: int = DEFAULT_NODE_BUDGET) -> Grid:
    """Cover the bounding box of ``domain`` inflated by ``margin`` and tag nodes.

    ``reach`` is the stencil reach in grid cells (max-norm); ``margin`` defaults
    to ``reach * h`` and must not be smaller.
    """
    if not h > 0:
        raise ValueError("grid spacing must be positive")
    if margin is None:
        margin = reach * h
    if margin < reach * h * (1 - 1e-12):
        raise ValueError(f"margin {margin} is smaller than the stencil reach {reach} * h")
    lo, hi = domain.bbox
    start = np.floor((lo - margin) / h + 1e-9).astype(np.int64)
    stop = np.ceil((hi + margin) / h - 1e-9).astype(np.int64)
    shape = tuple(int(s) for s in stop - start + 1)
    count = int(np.prod(shape, dtype=np.int64))
    if count > node_budget:
        raise ResourceError(f"grid would have {count} nodes, over the budget of {node_budget}")
    start = tuple(int(s) for s in start)
    rho = _eval_on_grid(domain.rho, domain.n, h, start, shape)
    inside = rho < 0
    klass = np.full(shape, EXTERIOR, dtype=np.int8)
    if reach > 0:
        near = ndimage.binary_dilation(inside, structure=np.ones((3,) * len(shape), dtype=bool), iterations=reach)
    else:
        near = inside
    klass[near] = BAND
    klass[inside] = INTERIOR
    # stencil arms of interior nodes must stay inside the array
    edge = np.zeros(shape, dtype=bool)
    for k in range(len(shape)):
        sl = [slice(None)] * len(shape)
        sl[k] = slice(0, reach)
        edge[tuple(sl)] = True
        sl[k] = slice(shape[k] - reach, None)
        edge[tuple(sl)] = True
    if np.any(inside & edge):
        raise ValueError("interior nodes too close to the grid edge; increase the margin")
    return Grid(domain.n, float(h), start, shape, int(reach), klass, domain)


@dataclass(eq=False)
class ScalarField:
    """One real value per node of ``grid``; exterior nodes hold NaN."""

    grid: Grid
    values: np.ndarray
    metadata: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid.shape)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def interior_values(self) -> np.ndarray:
        return self.flat[self.grid.interior]

    def copy(self, metadata: str | None = None) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy(), self.metadata if metadata is None else metadata)

    def check_finite(self) -> None:
        used = self.grid.klass != EXTERIOR
        if not np.all(np.isfinite(self.values[used])):
            raise FloatingPointError("field has non-finite values at interior or band nodes")


def sample_field(grid: Grid, fn, metadata: str = "", where: str = "used") -> ScalarField:
    """Evaluate ``fn`` (vectorised over points) at interior and band nodes."""
    vals = np.full(grid.size, np.nan)
    k = grid.klass.ravel()
    sel = np.flatnonzero(k != EXTERIOR) if where == "used" else np.flatnonzero(k == INTERIOR)
    vals[sel] = fn(grid.points(sel))
    return ScalarField(grid, vals, metadata)


def complex_hessian_fd(rho: RhoFn, x: np.ndarray, delta: float) -> np.ndarray:
    """Central-difference complex Hessian ``d^2 rho / dz_j dzbar_k`` at points ``x``.

    Normalised so that ``|z|^2`` has the identity matrix. Returns shape
    ``(N, n, n)``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    N, dim = x.shape
    n = dim // 2
    eye = np.eye(dim) * delta
    hr = np.empty((N, dim, dim))
    for a in range(dim):
        for b in range(a, dim):
            val = (rho(x + eye[a] + eye[b]) - rho(x + eye[a] - eye[b])
                   - rho(x - eye[a] + eye[b]) + rho(x - eye[a] - eye[b])) / (4 * delta**2)
            hr[:, a, b] = hr[:, b, a] = val
    xx = hr[:, 0::2, 0::2]
    yy = hr[:, 1::2, 1::2]
    xy = hr[:, 0::2, 1::2]
    q = 0.25 * ((xx + yy) + 1j * (xy - np.swapaxes(xy, 1, 2)))
    return 0.5 * (q + np.conj(np.swapaxes(q, 1, 2))) if n else q


def check_shl(domain: DomainSpec, samples: int = 400, delta: float = 1e-3, seed: int = 0,
              rel_tol: float = 0.25) -> tuple[bool, float]:
    """Sampled test of ``dd^c rho >= c beta`` on the domain.

    Estimates the smallest eigenvalue of the complex Hessian of ``rho`` over
    random interior points by central differences. The domain passes when the
    estimate is positive and at least ``(1 - rel_tol) * c``. Returns
    (ok, estimate).
    """
    rng = np.random.default_rng(seed)
    lo, hi = domain.bbox
    pts = lo + (hi - lo) * rng.random((samples * 20, lo.size))
    pts = pts[domain.rho(pts) < -4 * domain.lipschitz_bound * delta][:samples]
    if pts.shape[0] == 0:
        raise DomainError("no interior sample points found")
    q = complex_hessian_fd(domain.rho, pts, delta)
    est = float(np.linalg.eigvalsh(q)[:, 0].min())
    floor = (1 - rel_tol) * domain.c if domain.c > 0 else 0.0
    return bool(est > 1e-6 and est >= floor), est


def interpolate_field(u: ScalarField, x, outside: float = np.nan) -> np.ndarray:
    """Multilinear interpolation of ``u`` at points ``x`` (shape ``(N, 2n)``).

    Points whose cell touches an exterior node or leaves the array get
    ``outside``.
    """
    g = u.grid
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = x / g.h - np.asarray(g.start, dtype=float)
    base = np.floor(y + 1e-12).astype(np.int64)
    frac = np.clip(y - base, 0.0, 1.0)
    frac[frac < 1e-12] = 0.0
    shape = np.asarray(g.shape)
    strides = g.strides
    vals = u.flat
    klass = g.klass.reshape(-1)
    out = np.zeros(x.shape[0])
    bad = np.zeros(x.shape[0], dtype=bool)
    dim = x.shape[1]
    for bits in range(2**dim):
        b = np.array([(bits >> k) & 1 for k in range(dim)])
        w = np.prod(np.where(b == 1, frac, 1.0 - frac), axis=1)
        live = w > 0
        idx = base + b
        off = np.any((idx < 0) | (idx >= shape), axis=1)
        bad |= live & off
        flat = np.where(off, 0, idx @ strides)
        bad |= live & (klass[flat] == EXTERIOR)
        out += np.where(live & ~off, w * np.nan_to_num(vals[flat]), 0.0)
    out[bad] = outside
    return out
