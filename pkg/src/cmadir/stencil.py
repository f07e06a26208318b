"""Precomputed wide-stencil tables and the compiled sweep kernels.

Arm ends of every direction are translation invariant on a uniform grid, so
each arm is stored once as a short list of flat-index offsets and multilinear
weights. Arms of nodes near the boundary that leave the domain are replaced,
per node, by the crossing distance and the boundary value there (a CSR table).

Kernels work on flat value arrays. Each node's update is the minimum over
directions of the value that makes the discrete equation hold with the
neighbours fixed; frames whose last computed value already exceeds the running
minimum are skipped, which is exact while iterates only increase.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from .domain import EXTERIOR, INTERIOR, Grid, bisect_crossings
from .hermitian import DirectionSet, GeometryError, realify


@dataclass(eq=False)
class StencilTables:
    grid: Grid
    directions: DirectionSet
    arm_scale: float
    delta: float
    idx: np.ndarray          # interior flat indices, lexicographic
    rdirs: np.ndarray        # unique real unit vectors (m, 2n)
    frame_rd: np.ndarray     # (F, n, 2) indices into rdirs
    arm_nc: np.ndarray       # (2m,) number of live corners per arm
    arm_off: np.ndarray      # (2m, K) flat offsets
    arm_w: np.ndarray        # (2m, K) weights
    arm_sw: np.ndarray       # (2m,) weight falling on the node itself
    frame_ptr: np.ndarray    # (F + 1,)
    lam: np.ndarray          # (ndir, n)
    ov_ptr: np.ndarray       # (n_int + 1,)
    ov_arm: np.ndarray
    ov_len: np.ndarray
    _bv_cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_interior(self) -> int:
        return self.idx.size

    @property
    def n_arms(self) -> int:
        return self.arm_nc.size

    def crossing_points(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Coordinates of stored boundary crossings ``start:stop``."""
        stop = self.ov_arm.size if stop is None else stop
        rows = np.searchsorted(self.ov_ptr, np.arange(start, stop), side="right") - 1
        arms = self.ov_arm[start:stop]
        w = self.rdirs[arms // 2] * np.where(arms % 2 == 0, 1.0, -1.0)[:, None]
        return self.grid.points(self.idx[rows]) + self.ov_len[start:stop, None] * w

    def boundary_values(self, phi) -> np.ndarray:
        """Boundary data at every stored crossing point (cached per callable)."""
        key = id(phi)
        hit = self._bv_cache.get(key)
        if hit is not None and hit[0] is phi:
            return hit[1]
        total = self.ov_arm.size
        vals = np.empty(total)
        chunk = 1 << 20
        for s in range(0, total, chunk):
            e = min(total, s + chunk)
            vals[s:e] = phi(self.crossing_points(s, e))
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("boundary data is not finite at a boundary crossing")
        self._bv_cache[key] = (phi, vals)
        return vals


_TABLE_CACHE: dict = {}


def get_tables(grid: Grid, directions: DirectionSet, arm_scale: float = 2.0) -> StencilTables:
    key = (id(grid), id(directions), float(arm_scale))
    hit = _TABLE_CACHE.get(key)
    if hit is not None and hit.grid is grid and hit.directions is directions:
        return hit
    if len(_TABLE_CACHE) > 8:
        _TABLE_CACHE.clear()
    tab = build_tables(grid, directions, arm_scale)
    _TABLE_CACHE[key] = tab
    return tab


def build_tables(grid: Grid, directions: DirectionSet, arm_scale: float = 2.0) -> StencilTables:
    if directions.n != grid.n:
        raise ValueError("direction set and grid have different dimensions")
    dim = 2 * grid.n
    h = grid.h
    delta = arm_scale * h
    if math.ceil(arm_scale - 1e-12) > grid.reach:
        raise ValueError(f"arm scale {arm_scale} needs a grid reach of at least {math.ceil(arm_scale)}")

    # unique real directions, two per complex frame vector
    rdirs: list[np.ndarray] = []
    lookup: dict[tuple, int] = {}
    F = directions.frames.shape[0]
    frame_rd = np.zeros((F, grid.n, 2), dtype=np.int64)
    for k in range(F):
        for j in range(grid.n):
            for t, w in enumerate((realify(directions.frames[k][:, j]), realify(1j * directions.frames[k][:, j]))):
                w = np.where(np.abs(w) < 1e-15, 0.0, w)
                key = tuple(np.round(w, 14))
                if key not in lookup:
                    lookup[key] = len(rdirs)
                    rdirs.append(w)
                frame_rd[k, j, t] = lookup[key]
    rd = np.array(rdirs)
    m = rd.shape[0]

    strides = grid.strides
    K = 2**dim
    arm_nc = np.zeros(2 * m, dtype=np.int64)
    arm_off = np.zeros((2 * m, K), dtype=np.int64)
    arm_w = np.zeros((2 * m, K))
    arm_sw = np.zeros(2 * m)
    corners = np.array(list(itertools.product((0, 1), repeat=dim)), dtype=np.int64)
    for r in range(m):
        for s, sign in enumerate((1.0, -1.0)):
            a = 2 * r + s
            o = sign * delta * rd[r] / h
            base = np.floor(o + 1e-12).astype(np.int64)
            frac = o - base
            frac[np.abs(frac) < 1e-12] = 0.0
            c = 0
            for b in corners:
                w = float(np.prod(np.where(b == 1, frac, 1.0 - frac)))
                if w == 0.0:
                    continue
                off = base + b
                if np.any(np.abs(off) > grid.reach):
                    raise GeometryError("stencil arm reaches beyond the grid reach")
                if np.all(off == 0):
                    arm_sw[a] += w
                    continue
                arm_off[a, c] = int(off @ strides)
                arm_w[a, c] = w
                c += 1
            arm_nc[a] = c

    idx = grid.interior
    ov_ptr, ov_arm, ov_len = _crossings(grid, idx, rd, delta)
    lam = np.ascontiguousarray(directions.dir_lam, dtype=float)
    return StencilTables(grid, directions, float(arm_scale), delta, idx, rd, frame_rd, arm_nc, arm_off,
                         arm_w, arm_sw, directions.frame_slices, lam, ov_ptr, ov_arm, ov_len)


def _crossings(grid: Grid, idx: np.ndarray, rd: np.ndarray, delta: float):
    dom = grid.domain
    rho_tol = grid.h * 1e-6
    pts_all = grid.points(idx)
    r0 = dom.rho(pts_all)
    # arms from deeper nodes cannot reach the boundary (Lipschitz bound)
    cand = np.flatnonzero(r0 >= -1.05 * dom.lipschitz_bound * delta)
    pts = pts_all[cand]
    rows, arms, lens = [], [], []
    m = rd.shape[0]
    for a in range(2 * m):
        w = rd[a // 2] * (1.0 if a % 2 == 0 else -1.0)
        ends = pts + delta * w
        hit = np.flatnonzero(dom.rho(ends) >= 0)
        if hit.size == 0:
            continue
        t, ok = bisect_crossings(dom.rho, pts[hit], np.broadcast_to(w, (hit.size, w.size)),
                                 np.full(hit.size, delta), rho_tol)
        if np.any(~(t > 0)):
            raise GeometryError("boundary crossing not found for an exiting arm")
        rows.append(cand[hit])
        arms.append(np.full(hit.size, a, dtype=np.int32))
        lens.append(t)
    n_int = idx.size
    if rows:
        rows = np.concatenate(rows)
        arms = np.concatenate(arms)
        lens = np.concatenate(lens)
        order = np.lexsort((arms, rows))
        rows, arms, lens = rows[order], arms[order], lens[order]
        ptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=n_int))]).astype(np.int64)
    else:
        arms = np.zeros(0, dtype=np.int32)
        lens = np.zeros(0)
        ptr = np.zeros(n_int + 1, dtype=np.int64)
    return ptr, arms, lens


# ---------------------------------------------------------------- kernels


@njit(cache=True)
def _frame_terms(p, u, k, n, frame_rd, arm_nc, arm_off, arm_w, arm_sw, ovl, ovv, delta, Nq, Cq):
    for j in range(n):
        nq = 0.0
        cq = 0.0
        for t in range(2):
            r = frame_rd[k, j, t]
            ap = 2 * r
            am = ap + 1
            if ovl[ap] > 0.0:
                up = ovv[ap]
                sp = 0.0
                lp = ovl[ap]
            else:
                up = 0.0
                for c in range(arm_nc[ap]):
                    up += arm_w[ap, c] * u[p + arm_off[ap, c]]
                sp = arm_sw[ap]
                lp = delta
            if ovl[am] > 0.0:
                um = ovv[am]
                sm = 0.0
                lm = ovl[am]
            else:
                um = 0.0
                for c in range(arm_nc[am]):
                    um += arm_w[am, c] * u[p + arm_off[am, c]]
                sm = arm_sw[am]
                lm = delta
            s = lp + lm
            nq += 2.0 * (up / (lp * s) + um / (lm * s))
            cq += 2.0 * (1.0 / (lp * lm) - sp / (lp * s) - sm / (lm * s))
        Nq[j] = 0.25 * nq
        Cq[j] = 0.25 * cq


@njit(cache=True)
def _node_min(i, srow, p, u, gi, n, frame_rd, arm_nc, arm_off, arm_w, arm_sw, frame_ptr, lam,
              ov_ptr, ov_arm, ov_len, ov_val, delta, stale, last, lazy, ovl, ovv, Nq, Cq):
    for e in range(ov_ptr[i], ov_ptr[i + 1]):
        ovl[ov_arm[e]] = ov_len[e]
        ovv[ov_arm[e]] = ov_val[e]
    F = frame_ptr.size - 1
    k0 = last[srow]
    best = np.inf
    barg = k0
    for kk in range(F + 1):
        if kk == 0:
            k = k0
        else:
            k = kk - 1
            if k == k0:
                continue
        if lazy and stale[srow, k] >= best:
            continue
        _frame_terms(p, u, k, n, frame_rd, arm_nc, arm_off, arm_w, arm_sw, ovl, ovv, delta, Nq, Cq)
        fmin = np.inf
        for d in range(frame_ptr[k], frame_ptr[k + 1]):
            num = -gi
            den = 0.0
            for j in range(n):
                num += lam[d, j] * Nq[j]
                den += lam[d, j] * Cq[j]
            val = num / den
            if val < fmin:
                fmin = val
        stale[srow, k] = fmin
        if fmin < best:
            best = fmin
            barg = k
    for e in range(ov_ptr[i], ov_ptr[i + 1]):
        ovl[ov_arm[e]] = 0.0
    last[srow] = barg
    return best


@njit(cache=True)
def gs_sweep(u, idx, g, n, frame_rd, arm_nc, arm_off, arm_w, arm_sw, frame_ptr, lam,
             ov_ptr, ov_arm, ov_len, ov_val, delta, stale, last, lazy):
    """One lexicographic Gauss-Seidel sweep in place; returns (max |change|, decreases)."""
    n_arms = arm_nc.size
    ovl = np.zeros(n_arms)
    ovv = np.zeros(n_arms)
    Nq = np.zeros(n)
    Cq = np.zeros(n)
    maxup = 0.0
    viol = 0
    for i in range(idx.size):
        p = idx[i]
        new = _node_min(i, i, p, u, g[i], n, frame_rd, arm_nc, arm_off, arm_w, arm_sw, frame_ptr, lam,
                        ov_ptr, ov_arm, ov_len, ov_val, delta, stale, last, lazy, ovl, ovv, Nq, Cq)
        d = new - u[p]
        if d < -1e-12:
            viol += 1
        if abs(d) > maxup:
            maxup = abs(d)
        u[p] = new
    return maxup, viol


@njit(cache=True, parallel=True)
def jacobi_sweep(u_old, u_new, idx, g, n, frame_rd, arm_nc, arm_off, arm_w, arm_sw, frame_ptr, lam,
                 ov_ptr, ov_arm, ov_len, ov_val, delta, stale, last, lazy):
    """One Jacobi sweep reading ``u_old`` and writing interior nodes of ``u_new``."""
    n_arms = arm_nc.size
    nchunk = 64
    total = idx.size
    ups = np.zeros(nchunk)
    viols = np.zeros(nchunk, dtype=np.int64)
    for ch in prange(nchunk):
        ovl = np.zeros(n_arms)
        ovv = np.zeros(n_arms)
        Nq = np.zeros(n)
        Cq = np.zeros(n)
        lo = ch * total // nchunk
        hi = (ch + 1) * total // nchunk
        for i in range(lo, hi):
            p = idx[i]
            new = _node_min(i, i, p, u_old, g[i], n, frame_rd, arm_nc, arm_off, arm_w, arm_sw, frame_ptr, lam,
                            ov_ptr, ov_arm, ov_len, ov_val, delta, stale, last, lazy, ovl, ovv, Nq, Cq)
            d = new - u_old[p]
            if d < -1e-12:
                viols[ch] += 1
            if abs(d) > ups[ch]:
                ups[ch] = abs(d)
            u_new[p] = new
    return ups.max(), viols.sum()


@njit(cache=True)
def node_values(u, idx, rows, g, n, frame_rd, arm_nc, arm_off, arm_w, arm_sw, frame_ptr, lam,
                ov_ptr, ov_arm, ov_len, ov_val, delta, out):
    """Node-update values at interior rows ``rows`` without modifying ``u``."""
    n_arms = arm_nc.size
    ovl = np.zeros(n_arms)
    ovv = np.zeros(n_arms)
    Nq = np.zeros(n)
    Cq = np.zeros(n)
    F = frame_ptr.size - 1
    stale = np.empty((1, F))
    last = np.zeros(1, dtype=np.int64)
    for r in range(rows.size):
        i = rows[r]
        out[r] = _node_min(i, 0, idx[i], u, g[r], n, frame_rd, arm_nc, arm_off, arm_w, arm_sw, frame_ptr, lam,
                           ov_ptr, ov_arm, ov_len, ov_val, delta, stale, last, False, ovl, ovv, Nq, Cq)


@njit(cache=True)
def apply_min_operator(u, idx, n, frame_rd, arm_nc, arm_off, arm_w, arm_sw, frame_ptr, lam,
                       ov_ptr, ov_arm, ov_len, ov_val, delta, out, arg):
    """``out[i] = min_H Delta_H u`` at interior node ``idx[i]``; ``arg`` gets the direction."""
    n_arms = arm_nc.size
    ovl = np.zeros(n_arms)
    ovv = np.zeros(n_arms)
    Nq = np.zeros(n)
    Cq = np.zeros(n)
    F = frame_ptr.size - 1
    for i in range(idx.size):
        p = idx[i]
        for e in range(ov_ptr[i], ov_ptr[i + 1]):
            ovl[ov_arm[e]] = ov_len[e]
            ovv[ov_arm[e]] = ov_val[e]
        best = np.inf
        bd = -1
        u0 = u[p]
        for k in range(F):
            _frame_terms(p, u, k, n, frame_rd, arm_nc, arm_off, arm_w, arm_sw, ovl, ovv, delta, Nq, Cq)
            for d in range(frame_ptr[k], frame_ptr[k + 1]):
                val = 0.0
                for j in range(n):
                    val += lam[d, j] * (Nq[j] - Cq[j] * u0)
                if val < best:
                    best = val
                    bd = d
        for e in range(ov_ptr[i], ov_ptr[i + 1]):
            ovl[ov_arm[e]] = 0.0
        out[i] = best
        arg[i] = bd


@njit(cache=True)
def apply_direction(u, idx, n, frame_rd, arm_nc, arm_off, arm_w, arm_sw, frame_ptr, lam,
                    ov_ptr, ov_arm, ov_len, ov_val, delta, d, k, out):
    """``out[i] = Delta_H u`` for the single direction ``d`` (frame ``k``)."""
    n_arms = arm_nc.size
    ovl = np.zeros(n_arms)
    ovv = np.zeros(n_arms)
    Nq = np.zeros(n)
    Cq = np.zeros(n)
    for i in range(idx.size):
        p = idx[i]
        for e in range(ov_ptr[i], ov_ptr[i + 1]):
            ovl[ov_arm[e]] = ov_len[e]
            ovv[ov_arm[e]] = ov_val[e]
        _frame_terms(p, u, k, n, frame_rd, arm_nc, arm_off, arm_w, arm_sw, ovl, ovv, delta, Nq, Cq)
        val = 0.0
        for j in range(n):
            val += lam[d, j] * (Nq[j] - Cq[j] * u[p])
        for e in range(ov_ptr[i], ov_ptr[i + 1]):
            ovl[ov_arm[e]] = 0.0
        out[i] = val


def kernel_args(tab: StencilTables, ov_val: np.ndarray) -> tuple:
    return (tab.grid.n, tab.frame_rd, tab.arm_nc, tab.arm_off, tab.arm_w, tab.arm_sw, tab.frame_ptr,
            tab.lam, tab.ov_ptr, tab.ov_arm, tab.ov_len, ov_val, tab.delta)


def min_operator(tab: StencilTables, values: np.ndarray, phi) -> tuple[np.ndarray, np.ndarray]:
    """``min_H Delta_H`` of a full field at all interior nodes (and the argmin)."""
    u = np.ascontiguousarray(values, dtype=float).reshape(-1)
    out = np.empty(tab.n_interior)
    arg = np.empty(tab.n_interior, dtype=np.int64)
    apply_min_operator(u, tab.idx, *kernel_args(tab, tab.boundary_values(phi)), out, arg)
    return out, arg


def direction_operator(tab: StencilTables, values: np.ndarray, phi, d: int) -> np.ndarray:
    u = np.ascontiguousarray(values, dtype=float).reshape(-1)
    out = np.empty(tab.n_interior)
    k = int(tab.directions.dir_frame[d])
    apply_direction(u, tab.idx, *kernel_args(tab, tab.boundary_values(phi)), int(d), k, out)
    return out

