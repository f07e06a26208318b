"""Admissible Hermitian directions, the complex-line stencil and Gaveau's infimum.

A direction is a positive Hermitian matrix ``H = sum_j lam_j v_j v_j^*`` with
``prod lam_j = n^-n``. Its linear operator is
``Delta_H u = tr(H Q_u) = sum_j lam_j v_j^* Q_u v_j`` where ``Q_u`` is the
complex Hessian ``d^2 u / dz_j dzbar_k``. Along the complex line spanned by
``v`` the quadratic form ``v^* Q_u v`` equals a quarter of the real Laplacian
in the plane ``span_R{v, iv}``, which is what the stencil discretises.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm, qmc

from .domain import EXTERIOR, DomainSpec, ScalarField, boundary_crossing

DEFAULT_LADDER = (1.0, 4.0, 16.0, 64.0)


class NotPSHError(ValueError):
    """Complex Hessian with a negative eigenvalue."""


class GeometryError(RuntimeError):
    """A stencil arm left the tagged region of the grid."""


def realify(v) -> np.ndarray:
    """Complex n-vector -> interleaved real 2n-vector."""
    v = np.asarray(v, dtype=complex)
    out = np.empty(2 * v.size)
    out[0::2] = v.real
    out[1::2] = v.imag
    return out


@dataclass(frozen=True)
class HermitianDirection:
    frame: np.ndarray
    eigenvalues: np.ndarray
    arm_length: float | None = None

    @property
    def n(self) -> int:
        return self.eigenvalues.size

    @property
    def matrix(self) -> np.ndarray:
        V = self.frame
        return (V * self.eigenvalues) @ V.conj().T

    @property
    def trace(self) -> float:
        return float(self.eigenvalues.sum())

    def with_arm(self, arm_length: float) -> "HermitianDirection":
        return HermitianDirection(self.frame, self.eigenvalues, float(arm_length))


@dataclass(frozen=True, eq=False)
class DirectionSet:
    """Finite family of admissible directions grouped by unitary frame.

    ``frames[k]`` holds the frame vectors as columns; direction ``d`` uses frame
    ``dir_frame[d]`` and eigenvalues ``dir_lam[d]``. Directions are sorted by
    frame so that each frame's directions are contiguous.
    """

    n: int
    frames: np.ndarray
    dir_frame: np.ndarray
    dir_lam: np.ndarray
    frame_count: int
    profiles: tuple = ()
    seed: int = 0
    directions: tuple = field(init=False, repr=False)

    def __post_init__(self):
        dirs = tuple(HermitianDirection(self.frames[k], self.dir_lam[d].copy())
                     for d, k in enumerate(self.dir_frame))
        object.__setattr__(self, "directions", dirs)

    def __len__(self) -> int:
        return len(self.directions)

    def __iter__(self):
        return iter(self.directions)

    @property
    def frame_slices(self) -> np.ndarray:
        """Start offsets of each frame's block of directions (length F + 1)."""
        counts = np.bincount(self.dir_frame, minlength=self.frames.shape[0])
        return np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    def descriptor(self) -> str:
        prof = ";".join("(" + ",".join(f"{p:g}" for p in pr) + ")" for pr in self.profiles)
        return f"F={self.frame_count} profiles={prof} seed={self.seed} ndir={len(self)}"

    def to_csv(self, path) -> None:
        """One row per direction: eigenvalues, then frame entries as re/im pairs."""
        n = self.n
        cols = [f"lam{j + 1}" for j in range(n)]
        cols += [f"v{r + 1}{c + 1}_{p}" for c in range(n) for r in range(n) for p in ("re", "im")]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# {self.descriptor()}\n")
            fh.write(",".join(cols) + "\n")
            for d in self.directions:
                row = [repr(float(x)) for x in d.eigenvalues]
                for c in range(n):
                    for r in range(n):
                        z = d.frame[r, c]
                        row += [repr(float(z.real)), repr(float(z.imag))]
                fh.write(",".join(row) + "\n")


def normalize_profile(profile, n: int) -> np.ndarray:
    """Rescale positive ratios so that their product is ``n^-n``."""
    p = np.asarray(profile, dtype=float)
    if p.shape != (n,) or np.any(p <= 0):
        raise ValueError(f"profile must be {n} positive reals")
    s = (float(n) ** (-n) / np.prod(p)) ** (1.0 / n)
    return p * s


def ladder_profiles(n: int, ladder=DEFAULT_LADDER) -> list[tuple]:
    """Profiles ``(k, 1, ..., 1)`` for ``k`` in the ladder and their permutations."""
    seen = []
    for k in ladder:
        for perm in itertools.permutations([float(k)] + [1.0] * (n - 1)):
            if perm not in seen:
                seen.append(perm)
    return seen


def unitary_frames(n: int, count: int, seed: int = 0) -> np.ndarray:
    """Identity followed by ``count - 1`` quasi-random unitary frames.

    Scrambled Halton points are pushed through the normal quantile function and
    orthonormalised (QR with the phase of R's diagonal removed), which
    transports the Gaussian measure to the Haar measure on U(n).
    """
    frames = [np.eye(n, dtype=complex)]
    if count > 1:
        pts = qmc.Halton(d=2 * n * n, scramble=True, seed=seed).random(count - 1)
        gauss = norm.ppf(np.clip(pts, 1e-12, 1 - 1e-12))
        for g in gauss:
            Z = (g[: n * n] + 1j * g[n * n:]).reshape(n, n)
            q, r = np.linalg.qr(Z)
            d = np.diag(r)
            frames.append(q * (d / np.abs(d)))
    return np.array(frames)


def build_direction_set(n: int, F: int = 32, ratios=DEFAULT_LADDER, seed: int = 0) -> DirectionSet:
    """Cross ``F`` unitary frames with eigenvalue profiles.

    ``ratios`` is a list of profiles (each ``n`` positive reals) or a ladder of
    scalars expanded with :func:`ladder_profiles`. The canonical direction
    (identity frame, all eigenvalues ``1/n``) is always present.
    """
    if F < 1:
        raise ValueError("frame count must be >= 1")
    ratios = list(ratios)
    if ratios and np.isscalar(ratios[0]):
        profiles = ladder_profiles(n, ratios)
    else:
        profiles = [tuple(float(x) for x in p) for p in ratios]
    lams = [normalize_profile(p, n) for p in profiles]
    frames = unitary_frames(n, F, seed)
    canon = np.full(n, 1.0 / n)
    dir_frame, dir_lam = [], []
    for k in range(F):
        for lam in lams:
            dir_frame.append(k)
            dir_lam.append(lam)
    if not any(np.allclose(lam, canon, rtol=1e-12, atol=0) for lam in lams):
        # canonical member goes with the identity frame (frame 0)
        dir_frame.insert(len(lams), 0)
        dir_lam.insert(len(lams), canon)
    return DirectionSet(n, frames, np.array(dir_frame, dtype=np.int64), np.array(dir_lam),
                        frame_count=F, profiles=tuple(profiles), seed=seed)


def _check_hermitian(Q) -> np.ndarray:
    Q = np.asarray(Q, dtype=complex)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValueError("complex Hessian must be a square matrix")
    if np.max(np.abs(Q - Q.conj().T)) > 1e-12 * max(1.0, np.max(np.abs(Q))):
        raise ValueError("complex Hessian must be Hermitian")
    return Q


def gaveau_inf(Q, D: DirectionSet) -> float:
    """``min_{H in D} sum_jk H_jk Q_jk``, an upper bound for ``det(Q)^{1/n}``."""
    Q = _check_hermitian(Q)
    scale = np.linalg.norm(Q, 2)
    if scale > 0 and np.linalg.eigvalsh(Q).min() < -1e-8 * scale:
        raise NotPSHError("complex Hessian has a negative eigenvalue; the infimum is -inf")
    V = D.frames
    # Levi form sum_il Q_il v_i conj(v_l) for every frame vector v
    quad = np.einsum("kij,il,klj->kj", V, Q, V.conj()).real
    vals = np.einsum("dj,dj->d", D.dir_lam, quad[D.dir_frame])
    return float(vals.min())


def delta_H_exact(Q, H: HermitianDirection) -> float:
    """``sum_jk H_jk Q_jk`` for the complex Hessian ``Q_jk = d^2 u / dz_j dzbar_k``.

    For ``H = v v^*`` this is the Levi form ``sum Q_jk v_j conj(v_k)``, the
    quantity the complex-line stencil approximates.
    """
    return float(np.sum(H.matrix * np.asarray(Q, dtype=complex)).real)


def _interp(u: ScalarField, x: np.ndarray) -> float:
    g = u.grid
    y = x / g.h - np.asarray(g.start)
    base = np.floor(y + 1e-12).astype(np.int64)
    frac = np.clip(y - base, 0.0, 1.0)
    frac[frac < 1e-12] = 0.0
    total = 0.0
    for bits in itertools.product((0, 1), repeat=y.size):
        b = np.asarray(bits)
        w = float(np.prod(np.where(b == 1, frac, 1.0 - frac)))
        if w == 0.0:
            continue
        idx = base + b
        if np.any(idx < 0) or np.any(idx >= np.asarray(g.shape)):
            raise GeometryError("stencil arm left the grid")
        if g.klass[tuple(idx)] == EXTERIOR:
            raise GeometryError("interpolation touched an exterior node")
        total += w * u.values[tuple(idx)]
    return total


def discrete_delta_H(u, z, H: HermitianDirection, boundary_values=None, domain: DomainSpec | None = None,
                     arm_length: float | None = None, rho_tol: float | None = None) -> float:
    """Wide-stencil value of ``Delta_H u`` at the point ``z``.

    ``u`` is either a :class:`ScalarField` (arm ends are interpolated
    multilinearly from the grid) or a vectorised callable (evaluated exactly).
    Arms whose end leaves the domain are shortened to the boundary crossing and
    take ``boundary_values`` there; the second difference along each real axis
    then uses the unequal-arm formula.
    """
    if isinstance(u, ScalarField):
        grid = u.grid
        domain = grid.domain if domain is None else domain
        if np.isscalar(z) or np.asarray(z).ndim == 0:
            x = grid.points([int(z)])[0]
        else:
            x = np.asarray(z, dtype=float)
        delta = arm_length or H.arm_length or 2.0 * grid.h
        tol = rho_tol if rho_tol is not None else grid.h * 1e-6
        value_at = lambda p: _interp(u, p)  # noqa: E731
        u0 = _interp(u, x)
    else:
        x = np.asarray(z, dtype=float)
        delta = arm_length or H.arm_length
        if delta is None:
            raise ValueError("arm length required for callable fields")
        tol = rho_tol if rho_tol is not None else delta * 1e-8
        value_at = lambda p: float(u(p[None, :])[0])  # noqa: E731
        u0 = value_at(x)

    def arm(w):
        end = x + delta * w
        if domain is not None and domain.rho(end) >= 0:
            t = boundary_crossing(domain, x, w, delta, rho_tol=tol)
            if t is None or t <= 0:
                raise GeometryError("arm crosses the boundary but no crossing was found")
            return t, float(boundary_values(x[None, :] + t * w[None, :])[0])
        return delta, value_at(end)

    total = 0.0
    for j in range(H.n):
        v = H.frame[:, j]
        q = 0.0
        for w in (realify(v), realify(1j * v)):
            ap, up = arm(w)
            am, um = arm(-w)
            q += 2.0 * (up / (ap * (ap + am)) + um / (am * (ap + am)) - u0 / (ap * am))
        total += H.eigenvalues[j] * q / 4.0
    return float(total)
